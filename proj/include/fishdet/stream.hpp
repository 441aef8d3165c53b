#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <iosfwd>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "fishdet/checkpoint.hpp"
#include "fishdet/ensemble.hpp"
#include "fishdet/ingest.hpp"
#include "fishdet/kernels.hpp"

namespace fishdet::stream {

// ---------------------------------------------------------------------------
// Replay

/// nullopt = as fast as possible; otherwise wall-clock gaps are the record
/// gaps divided by the factor.
using Speedup = std::optional<double>;

Speedup parse_speedup(std::string_view text);  // "max" or a positive number

/// Global timestamp order (ties by mmsi, then position). Throws IoError when a
/// trajectory is not sorted by time.
std::vector<AisMessage> merge_order(const std::vector<Trajectory>& store);

/// Emits every record of `store` in global time order, pacing by `speedup`.
/// Returns the number of records emitted.
std::size_t replay(const std::vector<Trajectory>& store, Speedup speedup,
                   const std::function<void(const AisMessage&)>& sink);

// ---------------------------------------------------------------------------
// Online detection

struct Detection {
  std::int64_t mmsi = 0;
  Timestamp timestamp = 0;
  bool fishing = false;
  double probability = 0.0;
  float logit = 0.0f;           // single-model logit (0 for ensembles)
  std::vector<double> members;  // per-member probabilities for ensembles

  nlohmann::json to_json() const;
};

/// Immutable model shared by all workers: one checkpoint or a 3-member
/// ensemble.
class Detector {
 public:
  explicit Detector(std::shared_ptr<const Checkpoint> model);
  explicit Detector(std::shared_ptr<const ensemble::Ensemble> model);

  int window() const { return w_; }
  /// Scores one raw (unnormalized) window of w * 4 values, oldest first.
  Detection score(std::span<const float> raw_window, kernels::InferenceScratch& scratch) const;

 private:
  std::shared_ptr<const Checkpoint> single_;
  std::shared_ptr<const ensemble::Ensemble> ensemble_;
  int w_ = 0;
};

/// Per-vessel ring of the last w accepted messages.
struct VesselState {
  std::int64_t mmsi = 0;
  std::vector<float> ring;  // w * 4 raw attribute values
  std::size_t head = 0;     // next slot to write
  std::size_t count = 0;    // messages held, <= w
  std::optional<Timestamp> last_seen;
  std::uint64_t emitted = 0;
  std::uint64_t rejected_stale = 0;

  VesselState(std::int64_t id, int w) : mmsi(id), ring(static_cast<std::size_t>(w) * 4, 0.0f) {}
  std::size_t capacity() const { return ring.size() / 4; }
  /// Copies the held messages, oldest first, into `out` (count * 4 values).
  void snapshot(std::vector<float>& out) const;
};

/// Appends a cleaned message and scores the window once it is full. Messages
/// not newer than the last accepted one are counted as stale and dropped.
std::optional<Detection> ingest_online(VesselState& state, const AisMessage& msg,
                                       const Detector& detector,
                                       kernels::InferenceScratch& scratch,
                                       std::vector<float>& window_buffer);

struct EngineStats {
  std::uint64_t received = 0;
  std::uint64_t malformed = 0;
  std::uint64_t rejected_clean = 0;
  std::uint64_t rejected_stale = 0;
  std::uint64_t emitted = 0;
  std::uint64_t vessels = 0;

  nlohmann::json to_json() const;
};

/// Vessel states sharded by MMSI hash. With 0 workers messages are processed
/// on the caller's thread; otherwise each worker owns one shard and the sink
/// is called under a lock.
class Engine {
 public:
  using Sink = std::function<void(const Detection&)>;

  Engine(Detector detector, std::size_t workers, Sink sink);
  ~Engine();
  Engine(const Engine&) = delete;
  Engine& operator=(const Engine&) = delete;

  /// Applies ingest cleaning, then routes the message to its shard.
  void submit(const AisMessage& raw);
  /// Parses one NDJSON record and submits it; malformed lines are counted.
  void submit_line(std::string_view line);
  /// Drains queues and joins workers. Idempotent.
  void finish();
  EngineStats stats() const;

 private:
  struct Shard {
    std::unordered_map<std::int64_t, VesselState> vessels;
    kernels::InferenceScratch scratch;
    std::vector<float> window;
    std::deque<AisMessage> queue;
    std::mutex mu;
    std::condition_variable cv;
    bool closing = false;
    std::thread thread;
    std::uint64_t stale = 0, emitted = 0;
  };

  void process(Shard& shard, const AisMessage& msg);
  void worker_loop(Shard& shard);
  Shard& shard_for(std::int64_t mmsi);

  Detector detector_;
  Sink sink_;
  std::vector<std::unique_ptr<Shard>> shards_;
  bool threaded_ = false;
  bool finished_ = false;
  std::mutex sink_mu_;
  std::atomic<std::uint64_t> received_{0}, malformed_{0}, rejected_clean_{0};
};

// ---------------------------------------------------------------------------
// I/O

/// {"mmsi","timestamp","lat","lon","sog","cog"}; timestamp is either an ISO
/// string or epoch seconds. Throws std::invalid_argument on bad records.
AisMessage parse_record(std::string_view line);
std::string format_record(const AisMessage& m);

/// Feeds every line of `in` to the engine. Returns lines read.
std::size_t pump(std::istream& in, Engine& engine);

/// Minimal blocking TCP line server.
class TcpListener {
 public:
  /// Binds and listens; port 0 picks a free port. Throws IoError.
  TcpListener(const std::string& host, std::uint16_t port);
  ~TcpListener();
  TcpListener(const TcpListener&) = delete;
  TcpListener& operator=(const TcpListener&) = delete;

  std::uint16_t port() const { return port_; }
  /// Accepts connections one at a time and hands each received line to
  /// `on_line`. Stops after `max_connections` connections (0 = forever) or
  /// when `stop` becomes true between connections.
  void serve(const std::function<void(std::string_view)>& on_line, std::size_t max_connections,
             const std::atomic<bool>* stop = nullptr);

 private:
  int fd_ = -1;
  std::uint16_t port_ = 0;
};

/// "host:port" or ":port" or "port".
std::pair<std::string, std::uint16_t> parse_endpoint(std::string_view text);

}  // namespace fishdet::stream
