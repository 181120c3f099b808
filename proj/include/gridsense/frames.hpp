#pragma once

#include <array>
#include <filesystem>
#include <iosfwd>
#include <string_view>
#include <vector>

#include "gridsense/common.hpp"

namespace gridsense {

/// Per-bus measurement channels, in storage order.
enum class Channel { V = 0, I, theta, delta, P, Q };
inline constexpr int kChannels = 6;
inline constexpr std::array<std::string_view, kChannels> kChannelNames = {"V", "I", "theta",
                                                                         "delta", "P", "Q"};

enum class Label { benign, attacked };
enum class AttackType { none, random, general, lr };

std::string_view to_string(Label label);
std::string_view to_string(AttackType type);
Label parse_label(std::string_view s);
AttackType parse_attack_type(std::string_view s);

using FrameMatrix = Eigen::Matrix<double, Eigen::Dynamic, kChannels>;

/// One timestamp of per-bus [V, I, theta, delta, P, Q] readings. Angles in
/// radians, everything else per-unit; injections are signed (generation
/// positive).
struct MeasurementFrame {
  int t = 0;
  FrameMatrix values;
  Label label = Label::benign;
  AttackType attack_type = AttackType::none;

  int buses() const noexcept { return static_cast<int>(values.rows()); }
  double operator()(int bus, Channel c) const { return values(bus, static_cast<int>(c)); }
  double& operator()(int bus, Channel c) { return values(bus, static_cast<int>(c)); }

  bool operator==(const MeasurementFrame& o) const {
    return t == o.t && label == o.label && attack_type == o.attack_type &&
           values.rows() == o.values.rows() && values == o.values;
  }
};

/// CSV: header `t,bus,V,I,theta,delta,P,Q,label,attack_type`, one row per bus
/// per frame, buses numbered from 1 in order. Values print with round-trip
/// precision so read(write(x)) == x.
void write_frames_csv(std::ostream& out, const std::vector<MeasurementFrame>& frames);
std::vector<MeasurementFrame> read_frames_csv(std::istream& in);

/// JSON lines with the same fields as the CSV, one object per bus row.
void write_frames_jsonl(std::ostream& out, const std::vector<MeasurementFrame>& frames);
std::vector<MeasurementFrame> read_frames_jsonl(std::istream& in);

/// Chooses CSV or JSON lines from the extension (.csv / .jsonl).
void save_frames(const std::filesystem::path& path, const std::vector<MeasurementFrame>& frames);
std::vector<MeasurementFrame> load_frames(const std::filesystem::path& path);

}  // namespace gridsense
