#include <catch_amalgamated.hpp>

#include "eocs/grid.hpp"
#include "support.hpp"

using namespace eocs;
namespace ts = testing_support;

namespace {

const char* kTwoBus = R"({"name": "two", "buses": 2,
  "lines": [{"id": 0, "from": 0, "to": 1, "x": 0.5}],
  "sources": [{"bus": 0, "emf": 1.0, "x": 0.1}]})";

GridCase chain3() { return GridCase("chain", 3, {{0, 0, 1, 0.1}, {1, 1, 2, 0.2}}, {{0, 1.0, 0.1}}); }

}  // namespace

TEST_CASE("minimal case parses") {
  const auto c = parse_case(kTwoBus);
  CHECK(c.bus_count() == 2);
  CHECK(c.line_count() == 1);
  CHECK(c.sources().size() == 1);
  CHECK(c.relays().size() == 2);
}

TEST_CASE("parse errors name their location") {
  auto fails_with = [](const std::string& doc, const std::string& needle) {
    try {
      parse_case(doc);
    } catch (const CaseError& e) {
      INFO(e.what());
      return std::string(e.what()).find(needle) != std::string::npos;
    }
    return false;
  };
  CHECK(fails_with(R"({"name":"p","buses":3,"lines":[{"id":0,"from":1,"to":2,"x":0.1},{"id":1,"from":2,"to":1,"x":0.2}],
                      "sources":[{"bus":0,"emf":1,"x":0.1}]})",
                   "parallel line"));
  CHECK(fails_with(R"({"name":"d","buses":2,"lines":[{"id":0,"from":0,"to":5,"x":0.1}],"sources":[{"bus":0,"emf":1,"x":0.1}]})",
                   "dangling"));
  CHECK(fails_with(R"({"name":"r","buses":2,"lines":[{"id":0,"from":0,"to":1,"x":0}],"sources":[{"bus":0,"emf":1,"x":0.1}]})",
                   "non-positive reactance"));
  CHECK(fails_with(R"({"name":"s","buses":2,"lines":[{"id":0,"from":0,"to":1,"x":0.1}],"sources":[]})", "source"));
  CHECK(fails_with(R"({"name":"m","buses":2,"lines":[{"id":0,"from":0,"x":0.1}],"sources":[{"bus":0,"emf":1,"x":0.1}]})",
                   "case.lines[0]"));
  CHECK(fails_with("{not json", "malformed"));
  CHECK(fails_with(R"({"name":"e","buses":2,"lines":[{"id":0,"from":0,"to":1,"x":0.1}],"sources":[{"bus":0,"emf":-1,"x":0.1}]})",
                   "emf"));
}

TEST_CASE("bundled cases load with the expected sizes") {
  const auto c39 = load_case(ts::cases_dir() + "ieee39.json");
  CHECK(c39.bus_count() == 39);
  CHECK(c39.line_count() == 34);
  const auto c118 = load_case(ts::cases_dir() + "synthetic118.json");
  CHECK(c118.bus_count() == 118);
  const auto toy = load_case(ts::cases_dir() + "toy6.json");
  CHECK(toy.bus_count() == 6);
}

TEST_CASE("serialize / parse round trip") {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 10; ++i) {
    const auto c = ts::random_meshed(12, 8, rng);
    CHECK(parse_case(serialize_case(c)) == c);
  }
}

TEST_CASE("apply_trip") {
  const auto s = TopologyState::from_bits("11111");
  CHECK(apply_trip(s, 2).to_string() == "11011");
  CHECK(apply_trip(apply_trip(s, 2), 2).to_string() == "11011");
  const auto base = TopologyState::from_bits("11011");
  CHECK(apply_trip(apply_trip(base, 0), 4) == apply_trip(apply_trip(base, 4), 0));
  CHECK(apply_trip(s, 2).out_count() == 1);
}

TEST_CASE("status bitstrings are validated") {
  CHECK_THROWS_AS(TopologyState::from_bits("1102"), std::invalid_argument);
  CHECK_THROWS_AS(TopologyState::from_bits("11 1"), std::invalid_argument);
  CHECK(TopologyState::from_bits("").size() == 0);
}

TEST_CASE("components on a chain") {
  const auto c = chain3();
  auto all = TopologyState::all_in_service(2);
  CHECK(component_count(components(c, all)) == 1);
  CHECK(component_count(components(c, apply_trip(all, 1))) == 2);
  CHECK(components(c, apply_trip(all, 1)) == std::vector<BusId>{0, 0, 2});
}

TEST_CASE("components agree with union-find") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    const auto c = ts::random_meshed(10, 5, rng);
    const auto s = ts::random_outages(c, 6, rng);
    CHECK(components(c, s) == ts::union_find_labels(c, s));
  }
}

TEST_CASE("relay addressing") {
  const auto c = chain3();
  const auto r = parse_relay("1:to", c);
  CHECK(r.line_id == 1);
  CHECK(r.terminal == Terminal::to);
  CHECK(c.relay_bus(r) == 2);
  CHECK(c.fault_bus(r) == 1);
  CHECK_THROWS_AS(parse_relay("2:from", c), std::invalid_argument);
  CHECK_THROWS_AS(parse_relay("1:middle", c), std::invalid_argument);
  CHECK_THROWS_AS(parse_relay("x:from", c), std::invalid_argument);
  CHECK_THROWS_AS(parse_relay("1", c), std::invalid_argument);

  // Large cases address lines by their index, e.g. 354:from.
  std::vector<Line> lines;
  for (int i = 0; i < 400; ++i) lines.push_back({i, i, i + 1, 0.1});
  const GridCase big("big", 401, lines, {{0, 1.0, 0.1}});
  const auto r354 = parse_relay("354:from", big);
  CHECK(r354.line_id == 354);
  CHECK(big.relay_bus(r354) == 354);
  CHECK(big.fault_bus(r354) == 355);
}
