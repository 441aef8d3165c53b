#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

namespace fishdet {

/// Seconds since the Unix epoch, UTC.
using Timestamp = std::int64_t;

Timestamp parse_timestamp(std::string_view text);  // throws std::invalid_argument
std::optional<Timestamp> try_parse_timestamp(std::string_view text);
std::string format_timestamp(Timestamp t);

struct AisMessage {
  std::int64_t mmsi = 0;
  Timestamp timestamp = 0;
  double lat = 0.0;
  double lon = 0.0;
  double sog = 0.0;  // knots
  double cog = 0.0;  // degrees, [0, 360]

  friend bool operator==(const AisMessage&, const AisMessage&) = default;
};

struct Trajectory {
  std::int64_t mmsi = 0;
  std::vector<AisMessage> messages;  // strictly increasing timestamps

  std::size_t size() const { return messages.size(); }
  friend bool operator==(const Trajectory&, const Trajectory&) = default;
};

namespace ingest {

/// Header names for the six required columns. Defaults follow the public
/// marinecadastre.gov extracts.
struct CsvSchema {
  std::string mmsi = "MMSI";
  std::string timestamp = "BaseDateTime";
  std::string lat = "LAT";
  std::string lon = "LON";
  std::string sog = "SOG";
  std::string cog = "COG";
};

/// A fully parsed data row, not yet validated.
using RawRecord = AisMessage;

enum class Rejection { invalid_sog, invalid_cog, low_speed, out_of_range_position };

std::string_view to_string(Rejection r);

struct IngestReport {
  std::size_t rows_read = 0;
  std::size_t rows_invalid = 0;
  std::size_t rows_duplicate = 0;
  std::size_t rows_low_speed = 0;
  std::size_t rows_kept = 0;
  std::size_t vessels = 0;
  // Breakdown of rows_invalid.
  std::size_t malformed = 0;
  std::size_t invalid_sog = 0;
  std::size_t invalid_cog = 0;
  std::size_t out_of_range_position = 0;

  void count(Rejection r);
  void merge(const IngestReport& other);
  nlohmann::json to_json() const;
};

/// Reads every data row. Rows with a missing or unparsable required field are
/// counted as malformed (and invalid) and skipped.
std::vector<RawRecord> parse_csv(const std::string& path, const CsvSchema& schema,
                                 IngestReport& report);

/// Validates one record; accepted messages have lat/lon rounded
/// half-away-from-zero to 4 decimals.
std::variant<AisMessage, Rejection> clean(const RawRecord& record);

double round4(double v);

struct Assembled {
  std::vector<Trajectory> trajectories;  // sorted by mmsi
  std::size_t duplicates = 0;
};

/// Groups by MMSI and sorts by time. Repeated timestamps within a vessel keep
/// the first record encountered; the rest count as duplicates.
Assembled assemble(std::vector<AisMessage> messages);

struct IngestResult {
  std::vector<Trajectory> trajectories;
  IngestReport report;
};

/// parse_csv + clean + assemble over one or more files. Files are parsed
/// concurrently.
IngestResult ingest_files(const std::vector<std::string>& paths, const CsvSchema& schema);

/// Trajectory store: columns mmsi,timestamp,lat,lon,sog,cog sorted by
/// (mmsi, timestamp).
void write_store(const std::string& path, const std::vector<Trajectory>& trajectories);
std::vector<Trajectory> read_store(const std::string& path);

}  // namespace ingest
}  // namespace fishdet
