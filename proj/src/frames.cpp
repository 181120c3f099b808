#include "gridsense/frames.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

namespace gridsense {

namespace {

double to_double(std::string_view s, int line) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw ParseError("invalid number '" + std::string(s) + "'", line);
  return v;
}

void flush_rows(std::vector<MeasurementFrame>& frames, std::vector<std::array<double, kChannels>>& rows) {
  if (rows.empty()) return;
  auto& f = frames.back();
  f.values.resize(static_cast<Eigen::Index>(rows.size()), kChannels);
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (int c = 0; c < kChannels; ++c) f.values(static_cast<Eigen::Index>(i), c) = rows[i][c];
  rows.clear();
}

// Appends a bus row, starting a new frame when bus == 1.
void push_row(std::vector<MeasurementFrame>& frames, std::vector<std::array<double, kChannels>>& rows,
              int t, int bus, const std::array<double, kChannels>& vals, Label label, AttackType type,
              int line) {
  if (bus == 1) {
    flush_rows(frames, rows);
    frames.push_back(MeasurementFrame{t, {}, label, type});
  } else {
    if (frames.empty() || bus != static_cast<int>(rows.size()) + 1)
      throw ParseError("bus rows must run 1..N within each frame", line);
    const auto& f = frames.back();
    if (f.t != t || f.label != label || f.attack_type != type)
      throw ParseError("frame fields change within a frame", line);
  }
  rows.push_back(vals);
}

void finish(std::vector<MeasurementFrame>& frames, std::vector<std::array<double, kChannels>>& rows) {
  flush_rows(frames, rows);
  for (std::size_t k = 1; k < frames.size(); ++k)
    if (frames[k].values.rows() != frames[0].values.rows())
      throw ParseError("frames have different bus counts", 0);
}

}  // namespace

std::string_view to_string(Label label) {
  return label == Label::benign ? "benign" : "attacked";
}

std::string_view to_string(AttackType type) {
  switch (type) {
    case AttackType::none: return "none";
    case AttackType::random: return "random";
    case AttackType::general: return "general";
    case AttackType::lr: return "lr";
  }
  return "none";
}

Label parse_label(std::string_view s) {
  if (s == "benign") return Label::benign;
  if (s == "attacked") return Label::attacked;
  throw ParseError("unknown label '" + std::string(s) + "'", 0);
}

AttackType parse_attack_type(std::string_view s) {
  if (s == "none") return AttackType::none;
  if (s == "random") return AttackType::random;
  if (s == "general") return AttackType::general;
  if (s == "lr") return AttackType::lr;
  throw ParseError("unknown attack type '" + std::string(s) + "'", 0);
}

void write_frames_csv(std::ostream& out, const std::vector<MeasurementFrame>& frames) {
  out << "t,bus,V,I,theta,delta,P,Q,label,attack_type\n";
  for (const auto& f : frames) {
    for (int i = 0; i < f.buses(); ++i) {
      out << f.t << ',' << (i + 1);
      for (int c = 0; c < kChannels; ++c) out << ',' << fmt_double(f.values(i, c));
      out << ',' << to_string(f.label) << ',' << to_string(f.attack_type) << '\n';
    }
  }
}

std::vector<MeasurementFrame> read_frames_csv(std::istream& in) {
  std::vector<MeasurementFrame> frames;
  std::vector<std::array<double, kChannels>> rows;
  std::string line;
  int line_no = 0;
  if (!std::getline(in, line)) return frames;
  ++line_no;
  if (line != "t,bus,V,I,theta,delta,P,Q,label,attack_type")
    throw ParseError("unexpected CSV header", line_no);
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string_view> cols;
    std::string_view sv(line);
    std::size_t start = 0;
    while (true) {
      const auto comma = sv.find(',', start);
      cols.push_back(sv.substr(start, comma == std::string_view::npos ? sv.npos : comma - start));
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    if (cols.size() != 10) throw ParseError("expected 10 columns", line_no);
    std::array<double, kChannels> vals{};
    for (int c = 0; c < kChannels; ++c) vals[c] = to_double(cols[2 + c], line_no);
    push_row(frames, rows, static_cast<int>(to_double(cols[0], line_no)),
             static_cast<int>(to_double(cols[1], line_no)), vals, parse_label(cols[8]),
             parse_attack_type(cols[9]), line_no);
  }
  finish(frames, rows);
  return frames;
}

void write_frames_jsonl(std::ostream& out, const std::vector<MeasurementFrame>& frames) {
  for (const auto& f : frames) {
    for (int i = 0; i < f.buses(); ++i) {
      nlohmann::ordered_json row;
      row["t"] = f.t;
      row["bus"] = i + 1;
      for (int c = 0; c < kChannels; ++c) row[std::string(kChannelNames[c])] = f.values(i, c);
      row["label"] = to_string(f.label);
      row["attack_type"] = to_string(f.attack_type);
      out << row.dump() << '\n';
    }
  }
}

std::vector<MeasurementFrame> read_frames_jsonl(std::istream& in) {
  std::vector<MeasurementFrame> frames;
  std::vector<std::array<double, kChannels>> rows;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto row = nlohmann::json::parse(line);
      std::array<double, kChannels> vals{};
      for (int c = 0; c < kChannels; ++c) vals[c] = row.at(std::string(kChannelNames[c])).get<double>();
      push_row(frames, rows, row.at("t").get<int>(), row.at("bus").get<int>(), vals,
               parse_label(row.at("label").get<std::string>()),
               parse_attack_type(row.at("attack_type").get<std::string>()), line_no);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(e.what(), line_no);
    }
  }
  finish(frames, rows);
  return frames;
}

void save_frames(const std::filesystem::path& path, const std::vector<MeasurementFrame>& frames) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  if (path.extension() == ".jsonl")
    write_frames_jsonl(out, frames);
  else
    write_frames_csv(out, frames);
}

std::vector<MeasurementFrame> load_frames(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  return path.extension() == ".jsonl" ? read_frames_jsonl(in) : read_frames_csv(in);
}

}  // namespace gridsense
