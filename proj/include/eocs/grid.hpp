#pragma once

// Per-unit network model, topology state, and the JSON case-file format.

#include <algorithm>
#include <compare>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

namespace eocs {

using BusId = int;
using LineId = int;

struct Line {
  LineId id = 0;
  BusId from_bus = 0;
  BusId to_bus = 0;
  double reactance_pu = 0.0;

  bool operator==(const Line&) const = default;
};

struct Source {
  BusId bus = 0;
  double emf_pu = 1.0;
  double reactance_pu = 0.0;

  bool operator==(const Source&) const = default;
};

enum class Terminal { from, to };

inline std::string_view to_string(Terminal t) { return t == Terminal::from ? "from" : "to"; }

/// A relay sits at one terminal of a line; the fault is applied at the other.
struct RelayPoint {
  LineId line_id = 0;
  Terminal terminal = Terminal::from;

  auto operator<=>(const RelayPoint&) const = default;
};

/// Raised for malformed or invariant-violating case documents.
class CaseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class GridCase {
 public:
  GridCase() = default;
  GridCase(std::string name, int bus_count, std::vector<Line> lines, std::vector<Source> sources)
      : name_(std::move(name)), bus_count_(bus_count), lines_(std::move(lines)), sources_(std::move(sources)) {
    validate();
  }

  const std::string& name() const { return name_; }
  int bus_count() const { return bus_count_; }
  int line_count() const { return static_cast<int>(lines_.size()); }
  const std::vector<Line>& lines() const { return lines_; }
  const std::vector<Source>& sources() const { return sources_; }
  const Line& line(LineId id) const { return lines_.at(static_cast<std::size_t>(id)); }

  /// Two relay points per line, ordered (line 0 from, line 0 to, line 1 from, ...).
  std::vector<RelayPoint> relays() const {
    std::vector<RelayPoint> out;
    out.reserve(lines_.size() * 2);
    for (const auto& l : lines_) {
      out.push_back({l.id, Terminal::from});
      out.push_back({l.id, Terminal::to});
    }
    return out;
  }

  BusId relay_bus(const RelayPoint& r) const {
    const auto& l = line(r.line_id);
    return r.terminal == Terminal::from ? l.from_bus : l.to_bus;
  }

  /// Tail end of the protected line, opposite the relay.
  BusId fault_bus(const RelayPoint& r) const {
    const auto& l = line(r.line_id);
    return r.terminal == Terminal::from ? l.to_bus : l.from_bus;
  }

  double total_line_reactance() const {
    return std::accumulate(lines_.begin(), lines_.end(), 0.0,
                           [](double acc, const Line& l) { return acc + l.reactance_pu; });
  }
  double total_source_reactance() const {
    return std::accumulate(sources_.begin(), sources_.end(), 0.0,
                           [](double acc, const Source& s) { return acc + s.reactance_pu; });
  }

  bool operator==(const GridCase&) const = default;

 private:
  void validate() const {
    if (bus_count_ < 1) throw CaseError("case '" + name_ + "': bus count must be >= 1");
    if (sources_.empty()) throw CaseError("case '" + name_ + "': at least one source is required");
    std::set<std::pair<BusId, BusId>> endpoints;
    for (std::size_t i = 0; i < lines_.size(); ++i) {
      const auto& l = lines_[i];
      const std::string where = "line[" + std::to_string(i) + "]";
      if (l.id != static_cast<LineId>(i))
        throw CaseError(where + ": id " + std::to_string(l.id) + " must equal its position " + std::to_string(i));
      if (l.from_bus < 0 || l.from_bus >= bus_count_ || l.to_bus < 0 || l.to_bus >= bus_count_)
        throw CaseError(where + ": dangling bus reference (" + std::to_string(l.from_bus) + ", " +
                        std::to_string(l.to_bus) + ") with " + std::to_string(bus_count_) + " buses");
      if (l.from_bus == l.to_bus) throw CaseError(where + ": endpoints must differ");
      if (!(l.reactance_pu > 0.0)) throw CaseError(where + ": non-positive reactance");
      auto key = std::minmax(l.from_bus, l.to_bus);
      if (!endpoints.insert({key.first, key.second}).second)
        throw CaseError(where + ": parallel line between buses " + std::to_string(key.first) + " and " +
                        std::to_string(key.second) + " (merge parallel lines before writing the case)");
    }
    for (std::size_t i = 0; i < sources_.size(); ++i) {
      const auto& s = sources_[i];
      const std::string where = "source[" + std::to_string(i) + "]";
      if (s.bus < 0 || s.bus >= bus_count_) throw CaseError(where + ": dangling bus reference " + std::to_string(s.bus));
      if (!(s.emf_pu > 0.0)) throw CaseError(where + ": non-positive emf");
      if (!(s.reactance_pu > 0.0)) throw CaseError(where + ": non-positive reactance");
    }
  }

  std::string name_;
  int bus_count_ = 0;
  std::vector<Line> lines_;
  std::vector<Source> sources_;
};

/// In/out-of-service flags over lines (1 = in service).
class TopologyState {
 public:
  TopologyState() = default;
  explicit TopologyState(std::vector<std::uint8_t> status) : status_(std::move(status)) {
    for (auto& s : status_) s = s ? 1 : 0;
  }

  static TopologyState all_in_service(int line_count) {
    return TopologyState(std::vector<std::uint8_t>(static_cast<std::size_t>(line_count), 1));
  }

  /// Parses a string of '0'/'1' characters, line 0 first.
  static TopologyState from_bits(std::string_view bits) {
    std::vector<std::uint8_t> status;
    status.reserve(bits.size());
    for (std::size_t i = 0; i < bits.size(); ++i) {
      if (bits[i] != '0' && bits[i] != '1')
        throw std::invalid_argument("malformed status bitstring at position " + std::to_string(i) + ": '" +
                                    std::string(bits) + "'");
      status.push_back(bits[i] == '1');
    }
    return TopologyState(std::move(status));
  }

  int size() const { return static_cast<int>(status_.size()); }
  bool in_service(LineId id) const { return status_.at(static_cast<std::size_t>(id)) != 0; }
  const std::vector<std::uint8_t>& bits() const { return status_; }

  void set(LineId id, bool in) { status_.at(static_cast<std::size_t>(id)) = in ? 1 : 0; }

  int out_count() const {
    return static_cast<int>(std::count(status_.begin(), status_.end(), std::uint8_t{0}));
  }

  std::string to_string() const {
    std::string s;
    s.reserve(status_.size());
    for (auto b : status_) s.push_back(b ? '1' : '0');
    return s;
  }

  auto operator<=>(const TopologyState&) const = default;

 private:
  std::vector<std::uint8_t> status_;
};

inline TopologyState apply_trip(const TopologyState& state, LineId line_id) {
  TopologyState out = state;
  out.set(line_id, false);
  return out;
}

/// Component label per bus: the smallest bus id reachable over in-service lines.
inline std::vector<BusId> components(const GridCase& c, const TopologyState& state) {
  const int n = c.bus_count();
  std::vector<std::vector<BusId>> adj(static_cast<std::size_t>(n));
  for (const auto& l : c.lines()) {
    if (!state.in_service(l.id)) continue;
    adj[l.from_bus].push_back(l.to_bus);
    adj[l.to_bus].push_back(l.from_bus);
  }
  std::vector<BusId> label(static_cast<std::size_t>(n), -1);
  std::vector<BusId> stack;
  for (BusId root = 0; root < n; ++root) {
    if (label[root] >= 0) continue;
    label[root] = root;
    stack.push_back(root);
    while (!stack.empty()) {
      BusId u = stack.back();
      stack.pop_back();
      for (BusId v : adj[u]) {
        if (label[v] < 0) {
          label[v] = root;
          stack.push_back(v);
        }
      }
    }
  }
  return label;
}

inline int component_count(const std::vector<BusId>& labels) {
  int count = 0;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] == static_cast<BusId>(i)) ++count;
  return count;
}

// ---------------------------------------------------------------------------
// Case file I/O

inline GridCase parse_case(std::string_view document) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(document);
  } catch (const nlohmann::json::parse_error& e) {
    throw CaseError(std::string("malformed case document: ") + e.what());
  }
  auto require = [](const nlohmann::json& obj, const char* key, const std::string& where) -> const nlohmann::json& {
    if (!obj.is_object() || !obj.contains(key)) throw CaseError(where + ": missing key '" + key + "'");
    return obj.at(key);
  };
  auto as_int = [](const nlohmann::json& v, const std::string& where) {
    if (!v.is_number_integer()) throw CaseError(where + ": expected integer");
    return v.get<int>();
  };
  auto as_real = [](const nlohmann::json& v, const std::string& where) {
    if (!v.is_number()) throw CaseError(where + ": expected number");
    return v.get<double>();
  };

  if (!j.is_object()) throw CaseError("case document: top level must be an object");
  const auto& name_v = require(j, "name", "case");
  if (!name_v.is_string()) throw CaseError("case.name: expected string");
  const int buses = as_int(require(j, "buses", "case"), "case.buses");

  std::vector<Line> lines;
  const auto& lines_v = require(j, "lines", "case");
  if (!lines_v.is_array()) throw CaseError("case.lines: expected array");
  for (std::size_t i = 0; i < lines_v.size(); ++i) {
    const std::string where = "case.lines[" + std::to_string(i) + "]";
    const auto& lv = lines_v[i];
    Line l;
    l.id = as_int(require(lv, "id", where), where + ".id");
    l.from_bus = as_int(require(lv, "from", where), where + ".from");
    l.to_bus = as_int(require(lv, "to", where), where + ".to");
    l.reactance_pu = as_real(require(lv, "x", where), where + ".x");
    lines.push_back(l);
  }

  std::vector<Source> sources;
  const auto& src_v = require(j, "sources", "case");
  if (!src_v.is_array()) throw CaseError("case.sources: expected array");
  for (std::size_t i = 0; i < src_v.size(); ++i) {
    const std::string where = "case.sources[" + std::to_string(i) + "]";
    const auto& sv = src_v[i];
    Source s;
    s.bus = as_int(require(sv, "bus", where), where + ".bus");
    s.emf_pu = as_real(require(sv, "emf", where), where + ".emf");
    s.reactance_pu = as_real(require(sv, "x", where), where + ".x");
    sources.push_back(s);
  }

  std::sort(lines.begin(), lines.end(), [](const Line& a, const Line& b) { return a.id < b.id; });
  return GridCase(name_v.get<std::string>(), buses, std::move(lines), std::move(sources));
}

inline std::string serialize_case(const GridCase& c) {
  nlohmann::ordered_json j;
  j["name"] = c.name();
  j["buses"] = c.bus_count();
  j["lines"] = nlohmann::ordered_json::array();
  for (const auto& l : c.lines())
    j["lines"].push_back({{"id", l.id}, {"from", l.from_bus}, {"to", l.to_bus}, {"x", l.reactance_pu}});
  j["sources"] = nlohmann::ordered_json::array();
  for (const auto& s : c.sources())
    j["sources"].push_back({{"bus", s.bus}, {"emf", s.emf_pu}, {"x", s.reactance_pu}});
  return j.dump(2) + "\n";
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline GridCase load_case(const std::string& path) {
  try {
    return parse_case(read_text_file(path));
  } catch (const CaseError& e) {
    throw CaseError(path + ": " + e.what());
  }
}

/// Parses "LINE:from" / "LINE:to" and checks it against the case.
inline RelayPoint parse_relay(std::string_view text, const GridCase& c) {
  auto colon = text.find(':');
  if (colon == std::string_view::npos) throw std::invalid_argument("relay must look like LINE:from or LINE:to");
  std::string id_part(text.substr(0, colon));
  std::string_view term = text.substr(colon + 1);
  if (id_part.empty() || !std::all_of(id_part.begin(), id_part.end(), [](char ch) { return ch >= '0' && ch <= '9'; }))
    throw std::invalid_argument("relay line id must be a non-negative integer: '" + std::string(text) + "'");
  RelayPoint r;
  r.line_id = std::stoi(id_part);
  if (term == "from")
    r.terminal = Terminal::from;
  else if (term == "to")
    r.terminal = Terminal::to;
  else
    throw std::invalid_argument("relay terminal must be 'from' or 'to': '" + std::string(text) + "'");
  if (r.line_id >= c.line_count())
    throw std::invalid_argument("relay line " + id_part + " out of range for case with " +
                                std::to_string(c.line_count()) + " lines");
  return r;
}

}  // namespace eocs
