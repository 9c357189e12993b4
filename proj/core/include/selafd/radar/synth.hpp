// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "selafd/radar/recording.hpp"
#include "selafd/radar/stft.hpp"

namespace selafd::radar {

/// One point scatterer with a time-varying Doppler shift.
struct Scatterer {
  enum class Motion {
    kPeriodic,  // f = base + swing * sin(2 pi rate (t - start) + phase)
    kChirp,     // f sweeps linearly from `base` to `base + swing` over the window
  };
  Motion motion = Motion::kChirp;
  double amplitude = 1.0;
  double start = 0.0;  // seconds
  double stop = 0.0;   // seconds
  double base = 0.0;   // Hz
  double swing = 0.0;  // Hz
  double rate = 0.0;   // Hz (periodic only)
  double phase = 0.0;  // radians (periodic only)

  bool active(double t) const { return t >= start && t < stop; }
  /// Instantaneous Doppler frequency in Hz while active.
  double doppler(double t) const;
  /// Raised-cosine envelope: ramps over `fade` seconds at both ends.
  double envelope(double t, double fade) const;
};

struct ActivityTemplate {
  Activity label = Activity::kWalking;
  std::vector<Scatterer> scatterers;

  /// Largest |Doppler| reached by any scatterer, sampled at `sample_rate`.
  double peak_doppler(double duration, double sample_rate) const;
};

struct SynthOptions {
  double duration_s = 4.0;
  double sample_rate = 320.0;
  double snr_db = 10.0;
};

/// Seeded template: onset, speeds and amplitudes drawn per sample.
ActivityTemplate make_template(Activity label, const SynthOptions& options, std::uint64_t seed);

/// Sum of the template's scatterer returns plus complex Gaussian noise at
/// the configured SNR (relative to a unit-amplitude return). Throws
/// InputError when the duration cannot hold the activity.
CwRecording render(const ActivityTemplate& tpl, const SynthOptions& options, std::uint64_t seed);

/// make_template + render; identical (label, seed, options) give
/// bit-identical recordings.
CwRecording synth_activity(Activity label, const SynthOptions& options, std::uint64_t seed);

/// Seed of sample `index` of class `label` under a corpus master seed.
std::uint64_t corpus_sample_seed(std::uint64_t master_seed, Activity label, std::size_t index);

/// Four-class distractor task used to give a backbone generic ridge
/// features: steady positive tone, steady negative tone, full-band up
/// chirp, full-band down chirp.
inline constexpr std::size_t kNumDistractorClasses = 4;
std::vector<std::complex<double>> synth_distractor(std::size_t kind, const SynthOptions& options,
                                                   std::uint64_t seed);

}  // namespace selafd::radar
