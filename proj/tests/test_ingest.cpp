#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "fishdet/errors.hpp"
#include "fishdet/ingest.hpp"
#include "fishdet/rng.hpp"
#include "test_util.hpp"

using namespace fishdet;
using fishdet::testing::msg;
using ingest::Rejection;

namespace {
constexpr const char* kHeader = "MMSI,BaseDateTime,LAT,LON,SOG,COG,Heading\n";

Rejection rejection_of(const AisMessage& m) {
  return std::get<Rejection>(ingest::clean(m));
}
}  // namespace

TEST_CASE("timestamps parse as UTC and round trip") {
  CHECK(parse_timestamp("1970-01-01T00:00:00") == 0);
  CHECK(parse_timestamp("2020-04-01T00:00:00") == 1585699200);
  CHECK(parse_timestamp("2020-04-01 00:00:10") == 1585699210);
  CHECK(parse_timestamp("2020-04-01T00:00:10Z") == 1585699210);
  CHECK(format_timestamp(1585699210) == "2020-04-01T00:00:10");
  CHECK_FALSE(try_parse_timestamp("2020-13-01T00:00:00"));
  CHECK_FALSE(try_parse_timestamp("yesterday"));
}

TEST_CASE("parse_csv maps marinecadastre columns") {
  testing::TempDir dir;
  const auto path = dir.file("a.csv");
  testing::write_text(path, std::string(kHeader) +
                                "367123456,2020-04-01T00:00:00,48.4000,-124.7000,5.2,270.0,511\n" +
                                "367123456,2020-04-01T00:01:00,48.4000,-124.7000,,270.0,511\n");
  ingest::IngestReport report;
  const auto rows = ingest::parse_csv(path, {}, report);
  REQUIRE(rows.size() == 1);
  CHECK(rows[0] == msg(367123456, 1585699200, 48.4, -124.7, 5.2, 270.0));
  CHECK(report.rows_read == 2);
  CHECK(report.rows_invalid == 1);
  CHECK(report.malformed == 1);
}

TEST_CASE("parse_csv edge cases") {
  testing::TempDir dir;
  SUBCASE("header only") {
    const auto path = dir.file("h.csv");
    testing::write_text(path, kHeader);
    ingest::IngestReport report;
    CHECK(ingest::parse_csv(path, {}, report).empty());
    CHECK(report.rows_read == 0);
  }
  SUBCASE("missing column names the column") {
    const auto path = dir.file("m.csv");
    testing::write_text(path, "MMSI,BaseDateTime,LAT,LON,COG\n1,2020-04-01T00:00:00,1,1,1\n");
    ingest::IngestReport report;
    try {
      ingest::parse_csv(path, {}, report);
      FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
      CHECK(std::string(e.what()).find("SOG") != std::string::npos);
    }
  }
  SUBCASE("unreadable file") {
    ingest::IngestReport report;
    CHECK_THROWS_AS(ingest::parse_csv(dir.file("nope.csv"), {}, report), IoError);
  }
  SUBCASE("quoted fields") {
    const auto path = dir.file("q.csv");
    testing::write_text(path, "MMSI,BaseDateTime,LAT,LON,SOG,COG,VesselName\n"
                              "5,2020-04-01T00:00:00,1,2,3,4,\"ANNA, II\"\n");
    ingest::IngestReport report;
    CHECK(ingest::parse_csv(path, {}, report).size() == 1);
  }
}

TEST_CASE("clean applies the validity rules") {
  CHECK(rejection_of(msg(1, 0, 48, -124, -1.0, 10)) == ingest::Rejection::invalid_sog);
  CHECK(rejection_of(msg(1, 0, 48, -124, 0.5, 10)) == ingest::Rejection::low_speed);
  CHECK(rejection_of(msg(1, 0, 48, -124, 0.2, 10)) == ingest::Rejection::low_speed);
  CHECK(rejection_of(msg(1, 0, 48, -124, 3.0, 361.0)) == ingest::Rejection::invalid_cog);
  CHECK(rejection_of(msg(1, 0, 48, -124, 3.0, -0.1)) == ingest::Rejection::invalid_cog);
  CHECK(rejection_of(msg(1, 0, 91, -124, 3.0, 10)) == ingest::Rejection::out_of_range_position);
  CHECK(rejection_of(msg(1, 0, 48, 180.5, 3.0, 10)) == ingest::Rejection::out_of_range_position);

  const auto ok = std::get<AisMessage>(ingest::clean(msg(1, 0, 48.40004, -124.70005, 0.51, 360.0)));
  CHECK(ok.lat == 48.4);
  CHECK(ok.lon == -124.7001);  // half away from zero
  CHECK(ok.cog == 360.0);
  CHECK(ingest::round4(0.00005) == 0.0001);
  CHECK(ingest::round4(-0.00005) == -0.0001);
}

TEST_CASE("clean is idempotent and accepted messages satisfy the invariants") {
  Rng rng(11);
  int accepted = 0;
  for (int i = 0; i < 5000; ++i) {
    const auto raw = msg(1, i, rng.uniform(-100, 100), rng.uniform(-200, 200), rng.uniform(-2, 20),
                         rng.uniform(-20, 380));
    const auto res = ingest::clean(raw);
    if (const auto* m = std::get_if<AisMessage>(&res)) {
      ++accepted;
      CHECK(m->sog > 0.5);
      CHECK(m->cog >= 0.0);
      CHECK(m->cog <= 360.0);
      CHECK(std::abs(m->lat) <= 90.0);
      CHECK(std::abs(m->lon) <= 180.0);
      CHECK(m->lat == ingest::round4(m->lat));
      const auto again = ingest::clean(*m);
      REQUIRE(std::holds_alternative<AisMessage>(again));
      CHECK(std::get<AisMessage>(again) == *m);
    }
  }
  CHECK(accepted > 500);
}

TEST_CASE("assemble groups, sorts and drops duplicates") {
  SUBCASE("grouping") {
    const auto a = ingest::assemble({msg(1, 10, 0, 0, 1, 0), msg(2, 5, 0, 0, 1, 0), msg(1, 20, 0, 0, 1, 0)});
    REQUIRE(a.trajectories.size() == 2);
    CHECK(a.trajectories[0].size() == 2);
    CHECK(a.trajectories[1].size() == 1);
  }
  SUBCASE("identical rows") {
    const auto a = ingest::assemble({msg(1, 10, 0, 0, 1, 0), msg(1, 10, 0, 0, 1, 0)});
    CHECK(a.trajectories.at(0).size() == 1);
    CHECK(a.duplicates == 1);
  }
  SUBCASE("conflicting same-timestamp rows keep the first") {
    const auto a = ingest::assemble({msg(1, 10, 0, 0, 2, 0), msg(1, 10, 0, 0, 3, 0)});
    CHECK(a.trajectories.at(0).messages.at(0).sog == 2);
    CHECK(a.duplicates == 1);
  }
  SUBCASE("out of order input") {
    const auto a = ingest::assemble({msg(1, 30, 0, 0, 1, 0), msg(1, 10, 0, 0, 1, 0), msg(1, 20, 0, 0, 1, 0)});
    const auto& m = a.trajectories.at(0).messages;
    CHECK(m[0].timestamp == 10);
    CHECK(m[1].timestamp == 20);
    CHECK(m[2].timestamp == 30);
  }
}

TEST_CASE("assemble is invariant to input order") {
  // Distinct (mmsi, timestamp) keys, so "keep first" never decides.
  Rng rng(5);
  std::vector<AisMessage> rows;
  for (int v = 0; v < 6; ++v)
    for (int t = 0; t < 30; ++t)
      rows.push_back(msg(100 + v, t * 60, rng.uniform(47, 49), rng.uniform(-125, -123),
                         rng.uniform(1, 10), rng.uniform(0, 360)));
  const auto reference = ingest::assemble(rows).trajectories;
  for (int trial = 0; trial < 20; ++trial) {
    rng.shuffle(rows);
    CHECK(ingest::assemble(rows).trajectories == reference);
  }
}

TEST_CASE("ingest_files reports consistent counts and the store round trips") {
  testing::TempDir dir;
  testing::write_text(dir.file("a.csv"),
                      std::string(kHeader) +
                          "1,2020-04-01T00:00:00,48.1,-124.1,5,10,0\n"
                          "1,2020-04-01T00:01:00,48.2,-124.1,0.3,10,0\n"   // low speed
                          "1,2020-04-01T00:02:00,48.3,-124.1,-1,10,0\n"    // invalid sog
                          "1,2020-04-01T00:03:00,48.4,-124.1,5,10,0\n");
  testing::write_text(dir.file("b.csv"),
                      std::string(kHeader) +
                          "2,2020-04-01T00:00:00,48.5,-124.2,6,20,0\n"
                          "2,2020-04-01T00:00:00,48.5,-124.2,6,20,0\n"     // duplicate
                          "1,2020-04-01T00:02:30,48.35,-124.1,5,10,0\n"
                          "x,2020-04-01T00:00:00,48.5,-124.2,6,20,0\n");   // malformed
  const auto res = ingest::ingest_files({dir.file("a.csv"), dir.file("b.csv")}, {});
  const auto& r = res.report;
  CHECK(r.rows_read == 8);
  CHECK(r.rows_invalid == 2);
  CHECK(r.rows_low_speed == 1);
  CHECK(r.rows_duplicate == 1);
  CHECK(r.rows_kept == 4);
  CHECK(r.rows_kept == r.rows_read - r.rows_invalid - r.rows_duplicate - r.rows_low_speed);
  CHECK(r.vessels == 2);

  ingest::write_store(dir.file("store.csv"), res.trajectories);
  CHECK(ingest::read_store(dir.file("store.csv")) == res.trajectories);
  CHECK_THROWS_AS(ingest::ingest_files({dir.file("missing.csv")}, {}), IoError);
}
