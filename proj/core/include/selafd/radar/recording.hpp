// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <complex>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace selafd::radar {

/// The six activities, in dataset order.
enum class Activity { kWalking = 0, kSitting, kStanding, kDrinking, kPickingUp, kFalling };

inline constexpr std::size_t kNumActivities = 6;

const std::array<Activity, kNumActivities>& all_activities();
std::string_view activity_name(Activity a);
/// Throws InputError on an unknown name.
Activity parse_activity(std::string_view name);
std::vector<std::string> activity_names();

/// Complex baseband samples of a continuous-wave radar return.
struct CwRecording {
  std::vector<std::complex<double>> samples;
  double sample_rate = 0.0;
  Activity label = Activity::kWalking;
  std::string source_id;

  double duration() const { return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate : 0.0; }
};

/// Recording file: a text header
///
///   SELAFD-REC1
///   sample_rate <hz>
///   label <activity>
///   length <samples>
///   source_id <id>
///   end
///
/// followed by `length` little-endian float64 I/Q pairs. Round-trips
/// bit-exactly.
std::string serialize_recording(const CwRecording& rec);
CwRecording parse_recording(std::string_view bytes);
void write_recording(const std::string& path, const CwRecording& rec);
CwRecording read_recording(const std::string& path);

}  // namespace selafd::radar
