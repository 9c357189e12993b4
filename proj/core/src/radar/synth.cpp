// SPDX-License-Identifier: Apache-2.0
#include "selafd/radar/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "selafd/error.hpp"
#include "selafd/random.hpp"

namespace selafd::radar {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kFade = 0.05;
constexpr double kMinDuration = 2.0;

// Start time for an event of length `len` with 0.3 s margins.
double draw_onset(Rng& rng, double duration, double len) {
  const double lo = 0.3;
  const double hi = duration - len - 0.3;
  return hi <= lo ? lo : rng.uniform(lo, hi);
}

Scatterer chirp(double amplitude, double start, double len, double swing) {
  Scatterer s;
  s.motion = Scatterer::Motion::kChirp;
  s.amplitude = amplitude;
  s.start = start;
  s.stop = start + len;
  s.base = 0.0;
  s.swing = swing;
  return s;
}

Scatterer periodic(double amplitude, double duration, double base, double swing, double rate, double phase) {
  Scatterer s;
  s.motion = Scatterer::Motion::kPeriodic;
  s.amplitude = amplitude;
  s.start = 0.0;
  s.stop = duration;
  s.base = base;
  s.swing = swing;
  s.rate = rate;
  s.phase = phase;
  return s;
}

}  // namespace

double Scatterer::doppler(double t) const {
  const double tau = t - start;
  if (motion == Motion::kPeriodic) return base + swing * std::sin(kTwoPi * rate * tau + phase);
  const double len = stop - start;
  return base + swing * std::clamp(tau / len, 0.0, 1.0);
}

double Scatterer::envelope(double t, double fade) const {
  if (!active(t)) return 0.0;
  const double edge = std::min(t - start, stop - t);
  if (fade <= 0.0 || edge >= fade) return 1.0;
  return 0.5 - 0.5 * std::cos(std::numbers::pi * edge / fade);
}

double ActivityTemplate::peak_doppler(double duration, double sample_rate) const {
  double peak = 0.0;
  const auto n = static_cast<std::size_t>(std::lround(duration * sample_rate));
  for (const auto& s : scatterers)
    for (std::size_t i = 0; i < n; ++i) {
      const double t = static_cast<double>(i) / sample_rate;
      if (s.active(t)) peak = std::max(peak, std::abs(s.doppler(t)));
    }
  return peak;
}

ActivityTemplate make_template(Activity label, const SynthOptions& o, std::uint64_t seed) {
  if (!(o.duration_s >= kMinDuration))
    throw InputError("duration " + std::to_string(o.duration_s) + " s is shorter than the " +
                     std::to_string(kMinDuration) + " s activity template");
  if (!(o.sample_rate > 0.0)) throw InputError("sample rate must be positive");
  Rng rng(derive_seed(seed, 0x7e3a));
  const double T = o.duration_s;
  ActivityTemplate tpl;
  tpl.label = label;
  auto& sc = tpl.scatterers;
  switch (label) {
    case Activity::kWalking: {
      const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
      const double v = sign * rng.uniform(15.0, 30.0);
      const double rate = rng.uniform(0.8, 1.3);
      const double phase = rng.uniform(0.0, kTwoPi);
      sc.push_back(periodic(1.0, T, v, rng.uniform(6.0, 10.0), rate, phase));
      const double limb = rng.uniform(35.0, 55.0);
      const double limb_amp = rng.uniform(0.35, 0.5);
      sc.push_back(periodic(limb_amp, T, v, limb, rate, phase));
      sc.push_back(periodic(limb_amp, T, v, limb, rate, phase + std::numbers::pi));
      break;
    }
    case Activity::kSitting:
    case Activity::kStanding: {
      const double sign = label == Activity::kSitting ? -1.0 : 1.0;
      const double len = rng.uniform(1.0, 1.6);
      const double t0 = draw_onset(rng, T, len);
      const double swing = sign * rng.uniform(35.0, 55.0);
      sc.push_back(chirp(1.0, t0, len, swing));
      sc.push_back(chirp(0.4, t0, len, 0.5 * swing));
      break;
    }
    case Activity::kDrinking: {
      const double len = rng.uniform(0.5, 0.8);
      const double t0 = draw_onset(rng, T, len);
      sc.push_back(chirp(rng.uniform(0.45, 0.6), t0, len, rng.uniform(12.0, 20.0)));
      break;
    }
    case Activity::kPickingUp: {
      const double len1 = rng.uniform(0.45, 0.65);
      const double gap = rng.uniform(0.1, 0.3);
      const double len2 = rng.uniform(0.45, 0.65);
      const double t0 = draw_onset(rng, T, len1 + gap + len2);
      const double amp = rng.uniform(0.75, 0.95);
      sc.push_back(chirp(amp, t0, len1, -rng.uniform(20.0, 30.0)));
      sc.push_back(chirp(amp, t0 + len1 + gap, len2, rng.uniform(20.0, 30.0)));
      break;
    }
    case Activity::kFalling: {
      const double len = rng.uniform(0.4, 0.7);
      const double t0 = draw_onset(rng, T, len);
      const double swing = -rng.uniform(110.0, 140.0);
      sc.push_back(chirp(rng.uniform(1.0, 1.4), t0, len, swing));
      sc.push_back(chirp(0.4, t0, len, 0.7 * swing));
      break;
    }
  }
  return tpl;
}

CwRecording render(const ActivityTemplate& tpl, const SynthOptions& o, std::uint64_t seed) {
  if (!(o.duration_s >= kMinDuration))
    throw InputError("duration " + std::to_string(o.duration_s) + " s cannot hold the activity template");
  const auto n = static_cast<std::size_t>(std::lround(o.duration_s * o.sample_rate));
  CwRecording rec;
  rec.sample_rate = o.sample_rate;
  rec.label = tpl.label;
  rec.samples.assign(n, {0.0, 0.0});
  Rng rng(derive_seed(seed, 0x4e01));
  for (const auto& s : tpl.scatterers) {
    double phase = rng.uniform(0.0, kTwoPi);
    for (std::size_t i = 0; i < n; ++i) {
      const double t = static_cast<double>(i) / o.sample_rate;
      if (!s.active(t)) continue;
      rec.samples[i] += s.amplitude * s.envelope(t, kFade) * std::polar(1.0, phase);
      phase = std::fmod(phase + kTwoPi * s.doppler(t) / o.sample_rate, kTwoPi);
    }
  }
  const double sigma = std::sqrt(std::pow(10.0, -o.snr_db / 10.0) / 2.0);
  for (auto& x : rec.samples) x += std::complex<double>(rng.normal(0.0, sigma), rng.normal(0.0, sigma));
  return rec;
}

CwRecording synth_activity(Activity label, const SynthOptions& options, std::uint64_t seed) {
  return render(make_template(label, options, seed), options, seed);
}

std::uint64_t corpus_sample_seed(std::uint64_t master_seed, Activity label, std::size_t index) {
  return derive_seed(derive_seed(master_seed, static_cast<std::uint64_t>(label) + 1), index);
}

std::vector<std::complex<double>> synth_distractor(std::size_t kind, const SynthOptions& o, std::uint64_t seed) {
  if (kind >= kNumDistractorClasses) throw InputError("distractor kind must be below 4");
  Rng rng(derive_seed(seed, 0xd157));
  const auto n = static_cast<std::size_t>(std::lround(o.duration_s * o.sample_rate));
  const double nyq = o.sample_rate / 2.0;
  double f0 = 0.0, f1 = 0.0;
  switch (kind) {
    case 0: f0 = f1 = rng.uniform(0.1, 0.75) * nyq; break;
    case 1: f0 = f1 = -rng.uniform(0.1, 0.75) * nyq; break;
    case 2: f0 = -rng.uniform(0.5, 0.85) * nyq; f1 = rng.uniform(0.5, 0.85) * nyq; break;
    default: f0 = rng.uniform(0.5, 0.85) * nyq; f1 = -rng.uniform(0.5, 0.85) * nyq; break;
  }
  std::vector<std::complex<double>> out(n);
  double phase = rng.uniform(0.0, kTwoPi);
  for (std::size_t i = 0; i < n; ++i) {
    const double frac = static_cast<double>(i) / static_cast<double>(n);
    out[i] = std::polar(1.0, phase);
    phase = std::fmod(phase + kTwoPi * (f0 + (f1 - f0) * frac) / o.sample_rate, kTwoPi);
  }
  const double sigma = std::sqrt(std::pow(10.0, -o.snr_db / 10.0) / 2.0);
  for (auto& x : out) x += std::complex<double>(rng.normal(0.0, sigma), rng.normal(0.0, sigma));
  return out;
}

}  // namespace selafd::radar
