// SPDX-License-Identifier: Apache-2.0
#include "selafd/radar/recording.hpp"

#include <bit>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <sstream>

#include "selafd/error.hpp"

namespace selafd::radar {

const std::array<Activity, kNumActivities>& all_activities() {
  static const std::array<Activity, kNumActivities> all = {Activity::kWalking,  Activity::kSitting,
                                                           Activity::kStanding, Activity::kDrinking,
                                                           Activity::kPickingUp, Activity::kFalling};
  return all;
}

std::string_view activity_name(Activity a) {
  switch (a) {
    case Activity::kWalking: return "walking";
    case Activity::kSitting: return "sitting";
    case Activity::kStanding: return "standing";
    case Activity::kDrinking: return "drinking";
    case Activity::kPickingUp: return "picking_up";
    case Activity::kFalling: return "falling";
  }
  return "?";
}

Activity parse_activity(std::string_view name) {
  for (Activity a : all_activities())
    if (activity_name(a) == name) return a;
  throw InputError("unknown activity label '" + std::string(name) + "'");
}

std::vector<std::string> activity_names() {
  std::vector<std::string> out;
  for (Activity a : all_activities()) out.emplace_back(activity_name(a));
  return out;
}

namespace {

constexpr std::string_view kRecMagic = "SELAFD-REC1";

std::string fmt_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

void put_f64(std::string& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xffU));
}

double get_f64(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return std::bit_cast<double>(v);
}

}  // namespace

std::string serialize_recording(const CwRecording& rec) {
  if (rec.source_id.find_first_of(" \n") != std::string::npos)
    throw InputError("source_id must not contain whitespace: '" + rec.source_id + "'");
  std::string out(kRecMagic);
  out += "\nsample_rate " + fmt_double(rec.sample_rate) + "\nlabel " + std::string(activity_name(rec.label)) +
         "\nlength " + std::to_string(rec.samples.size()) + "\nsource_id " +
         (rec.source_id.empty() ? std::string("-") : rec.source_id) + "\nend\n";
  out.reserve(out.size() + rec.samples.size() * 16);
  for (const auto& s : rec.samples) {
    put_f64(out, s.real());
    put_f64(out, s.imag());
  }
  return out;
}

CwRecording parse_recording(std::string_view bytes) {
  std::size_t pos = 0;
  auto next_line = [&]() -> std::string {
    const std::size_t nl = bytes.find('\n', pos);
    if (nl == std::string_view::npos) throw InputError("truncated recording header");
    std::string line(bytes.substr(pos, nl - pos));
    pos = nl + 1;
    return line;
  };
  if (next_line() != kRecMagic) throw InputError("not a SELAFD-REC1 recording");
  CwRecording rec;
  std::size_t length = 0;
  bool have_rate = false, have_label = false, have_length = false;
  for (;;) {
    const std::string line = next_line();
    if (line == "end") break;
    const std::size_t sp = line.find(' ');
    if (sp == std::string::npos) throw InputError("malformed recording header line: " + line);
    const std::string key = line.substr(0, sp);
    const std::string val = line.substr(sp + 1);
    if (key == "sample_rate") {
      auto [p, ec] = std::from_chars(val.data(), val.data() + val.size(), rec.sample_rate);
      if (ec != std::errc() || p != val.data() + val.size()) throw InputError("bad sample_rate: " + val);
      have_rate = true;
    } else if (key == "label") {
      rec.label = parse_activity(val);
      have_label = true;
    } else if (key == "length") {
      auto [p, ec] = std::from_chars(val.data(), val.data() + val.size(), length);
      if (ec != std::errc() || p != val.data() + val.size()) throw InputError("bad length: " + val);
      have_length = true;
    } else if (key == "source_id") {
      rec.source_id = val == "-" ? "" : val;
    } else {
      throw InputError("unknown recording header key '" + key + "'");
    }
  }
  if (!have_rate || !have_label || !have_length)
    throw InputError("recording header lacks sample_rate, label or length");
  if (!(rec.sample_rate > 0.0)) throw InputError("recording sample_rate must be positive");
  if (bytes.size() - pos != length * 16)
    throw InputError("recording payload has " + std::to_string(bytes.size() - pos) + " bytes, expected " +
                     std::to_string(length * 16));
  const auto* base = reinterpret_cast<const unsigned char*>(bytes.data() + pos);
  rec.samples.resize(length);
  for (std::size_t i = 0; i < length; ++i) rec.samples[i] = {get_f64(base + 16 * i), get_f64(base + 16 * i + 8)};
  return rec;
}

void write_recording(const std::string& path, const CwRecording& rec) {
  const std::string bytes = serialize_recording(rec);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path);
}

CwRecording read_recording(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_recording(ss.str());
}

}  // namespace selafd::radar
