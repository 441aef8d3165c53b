#include "fishdet/stream.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <charconv>
#include <chrono>
#include <cstring>
#include <istream>
#include <queue>
#include <stdexcept>
#include <tuple>

#include "fishdet/errors.hpp"

namespace fishdet::stream {

Speedup parse_speedup(std::string_view text) {
  if (text == "max") return std::nullopt;
  double v = 0.0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc{} || res.ptr != text.data() + text.size() || !(v > 0.0)) {
    throw std::invalid_argument("speedup must be 'max' or a positive number, got '" +
                                std::string(text) + "'");
  }
  return v;
}

std::vector<AisMessage> merge_order(const std::vector<Trajectory>& store) {
  using Key = std::tuple<Timestamp, std::int64_t, std::size_t, std::size_t>;  // ts, mmsi, traj, idx
  std::priority_queue<Key, std::vector<Key>, std::greater<>> heap;
  std::size_t total = 0;
  for (std::size_t t = 0; t < store.size(); ++t) {
    const auto& msgs = store[t].messages;
    for (std::size_t i = 1; i < msgs.size(); ++i) {
      if (msgs[i].timestamp < msgs[i - 1].timestamp) {
        throw IoError("trajectory " + std::to_string(store[t].mmsi) + " is not sorted by time at " +
                      format_timestamp(msgs[i].timestamp));
      }
    }
    total += msgs.size();
    if (!msgs.empty()) heap.emplace(msgs[0].timestamp, msgs[0].mmsi, t, 0);
  }
  std::vector<AisMessage> out;
  out.reserve(total);
  while (!heap.empty()) {
    auto [ts, mmsi, t, i] = heap.top();
    heap.pop();
    const auto& msgs = store[t].messages;
    out.push_back(msgs[i]);
    if (i + 1 < msgs.size()) heap.emplace(msgs[i + 1].timestamp, msgs[i + 1].mmsi, t, i + 1);
  }
  return out;
}

std::size_t replay(const std::vector<Trajectory>& store, Speedup speedup,
                   const std::function<void(const AisMessage&)>& sink) {
  const auto ordered = merge_order(store);
  if (ordered.empty()) return 0;
  const auto wall0 = std::chrono::steady_clock::now();
  const Timestamp t0 = ordered.front().timestamp;
  for (const auto& m : ordered) {
    if (speedup) {
      const double offset = static_cast<double>(m.timestamp - t0) / *speedup;
      std::this_thread::sleep_until(wall0 + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                                                std::chrono::duration<double>(offset)));
    }
    sink(m);
  }
  return ordered.size();
}

// ---------------------------------------------------------------------------

nlohmann::json Detection::to_json() const {
  nlohmann::json j = {{"mmsi", mmsi},
                      {"timestamp", format_timestamp(timestamp)},
                      {"label", fishing ? "fishing" : "sailing"},
                      {"p", probability}};
  j["members"] = members;
  return j;
}

Detector::Detector(std::shared_ptr<const Checkpoint> model) : single_(std::move(model)) {
  if (!single_) throw std::invalid_argument("detector: null checkpoint");
  w_ = single_->config.w;
}

Detector::Detector(std::shared_ptr<const ensemble::Ensemble> model) : ensemble_(std::move(model)) {
  if (!ensemble_) throw std::invalid_argument("detector: null ensemble");
  w_ = ensemble_->window();
}

Detection Detector::score(std::span<const float> raw_window,
                          kernels::InferenceScratch& scratch) const {
  Detection d;
  if (single_) {
    std::vector<float> norm(raw_window.begin(), raw_window.end());
    single_->norm.apply(norm);
    d.logit = kernels::infer_window(single_->config, single_->weights, norm, scratch);
    d.probability = nn::sigmoid_scalar<double>(d.logit);
    d.fishing = eval::is_fishing(d.logit);
  } else {
    std::array<float, 3> logits{};
    for (std::size_t m = 0; m < 3; ++m) logits[m] = ensemble_->member_logit(m, raw_window, scratch);
    const auto p = ensemble_->combine(logits);
    d.probability = p.probability;
    d.fishing = p.fishing;
    d.members.assign(p.members.begin(), p.members.end());
  }
  return d;
}

void VesselState::snapshot(std::vector<float>& out) const {
  const std::size_t cap = capacity();
  out.resize(count * 4);
  const std::size_t start = (head + cap - count) % cap;
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t slot = (start + i) % cap;
    std::memcpy(out.data() + i * 4, ring.data() + slot * 4, 4 * sizeof(float));
  }
}

std::optional<Detection> ingest_online(VesselState& state, const AisMessage& msg,
                                       const Detector& detector,
                                       kernels::InferenceScratch& scratch,
                                       std::vector<float>& window_buffer) {
  if (state.last_seen && msg.timestamp <= *state.last_seen) {
    ++state.rejected_stale;
    return std::nullopt;
  }
  state.last_seen = msg.timestamp;
  float* slot = state.ring.data() + state.head * 4;
  // Same float rounding and attribute order as batch windowing.
  slot[0] = static_cast<float>(msg.lat);
  slot[1] = static_cast<float>(msg.lon);
  slot[2] = static_cast<float>(msg.cog);
  slot[3] = static_cast<float>(msg.sog);
  state.head = (state.head + 1) % state.capacity();
  if (state.count < state.capacity()) ++state.count;
  if (state.count < state.capacity()) return std::nullopt;

  state.snapshot(window_buffer);
  Detection d = detector.score(window_buffer, scratch);
  d.mmsi = msg.mmsi;
  d.timestamp = msg.timestamp;
  ++state.emitted;
  return d;
}

nlohmann::json EngineStats::to_json() const {
  return {{"received", received}, {"malformed", malformed}, {"rejected_clean", rejected_clean},
          {"rejected_stale", rejected_stale}, {"emitted", emitted}, {"vessels", vessels}};
}

// ---------------------------------------------------------------------------

Engine::Engine(Detector detector, std::size_t workers, Sink sink)
    : detector_(std::move(detector)), sink_(std::move(sink)), threaded_(workers > 0) {
  const std::size_t n = std::max<std::size_t>(1, workers);
  for (std::size_t i = 0; i < n; ++i) shards_.push_back(std::make_unique<Shard>());
  if (threaded_) {
    for (auto& s : shards_) {
      Shard* p = s.get();
      p->thread = std::thread([this, p] { worker_loop(*p); });
    }
  }
}

Engine::~Engine() {
  try {
    finish();
  } catch (...) {
  }
}

Engine::Shard& Engine::shard_for(std::int64_t mmsi) {
  const auto h = std::hash<std::int64_t>{}(mmsi) * 0x9e3779b97f4a7c15ull;
  return *shards_[(h >> 32) % shards_.size()];
}

void Engine::process(Shard& shard, const AisMessage& msg) {
  auto it = shard.vessels.find(msg.mmsi);
  if (it == shard.vessels.end()) {
    it = shard.vessels.emplace(msg.mmsi, VesselState(msg.mmsi, detector_.window())).first;
  }
  const auto before = it->second.rejected_stale;
  auto d = ingest_online(it->second, msg, detector_, shard.scratch, shard.window);
  shard.stale += it->second.rejected_stale - before;
  if (!d) return;
  ++shard.emitted;
  if (threaded_) {
    std::lock_guard lock(sink_mu_);
    sink_(*d);
  } else {
    sink_(*d);
  }
}

void Engine::worker_loop(Shard& shard) {
  std::deque<AisMessage> batch;
  for (;;) {
    {
      std::unique_lock lock(shard.mu);
      shard.cv.wait(lock, [&] { return shard.closing || !shard.queue.empty(); });
      if (shard.queue.empty() && shard.closing) return;
      batch.swap(shard.queue);
    }
    for (const auto& m : batch) process(shard, m);
    batch.clear();
  }
}

void Engine::submit(const AisMessage& raw) {
  if (finished_) throw StateError("engine already finished");
  ++received_;
  auto cleaned = ingest::clean(raw);
  if (!std::holds_alternative<AisMessage>(cleaned)) {
    ++rejected_clean_;
    return;
  }
  const auto& msg = std::get<AisMessage>(cleaned);
  Shard& shard = shard_for(msg.mmsi);
  if (!threaded_) {
    process(shard, msg);
    return;
  }
  {
    std::lock_guard lock(shard.mu);
    shard.queue.push_back(msg);
  }
  shard.cv.notify_one();
}

void Engine::submit_line(std::string_view line) {
  while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.remove_suffix(1);
  if (line.empty()) return;
  AisMessage m;
  try {
    m = parse_record(line);
  } catch (const std::exception&) {
    ++received_;
    ++malformed_;
    return;
  }
  submit(m);
}

void Engine::finish() {
  if (finished_) return;
  finished_ = true;
  if (!threaded_) return;
  for (auto& s : shards_) {
    {
      std::lock_guard lock(s->mu);
      s->closing = true;
    }
    s->cv.notify_one();
  }
  for (auto& s : shards_) {
    if (s->thread.joinable()) s->thread.join();
  }
}

EngineStats Engine::stats() const {
  EngineStats st;
  st.received = received_;
  st.malformed = malformed_;
  st.rejected_clean = rejected_clean_;
  // Shard counters are only stable once workers are idle; callers read them
  // after finish().
  for (const auto& s : shards_) {
    st.rejected_stale += s->stale;
    st.emitted += s->emitted;
    st.vessels += s->vessels.size();
  }
  return st;
}

// ---------------------------------------------------------------------------

AisMessage parse_record(std::string_view line) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("bad JSON record: ") + e.what());
  }
  if (!j.is_object()) throw std::invalid_argument("record is not a JSON object");
  auto number = [&](const char* key) -> double {
    auto it = j.find(key);
    if (it == j.end() || !it->is_number()) {
      throw std::invalid_argument(std::string("record field '") + key + "' missing or not numeric");
    }
    return it->get<double>();
  };
  AisMessage m;
  auto id = j.find("mmsi");
  if (id == j.end() || !id->is_number_integer()) {
    throw std::invalid_argument("record field 'mmsi' missing or not an integer");
  }
  m.mmsi = id->get<std::int64_t>();
  auto ts = j.find("timestamp");
  if (ts == j.end()) throw std::invalid_argument("record field 'timestamp' missing");
  if (ts->is_string()) {
    m.timestamp = parse_timestamp(ts->get<std::string>());
  } else if (ts->is_number_integer()) {
    m.timestamp = ts->get<std::int64_t>();
  } else {
    throw std::invalid_argument("record field 'timestamp' must be a string or integer");
  }
  m.lat = number("lat");
  m.lon = number("lon");
  m.sog = number("sog");
  m.cog = number("cog");
  return m;
}

std::string format_record(const AisMessage& m) {
  nlohmann::json j = {{"mmsi", m.mmsi},
                      {"timestamp", format_timestamp(m.timestamp)},
                      {"lat", m.lat},
                      {"lon", m.lon},
                      {"sog", m.sog},
                      {"cog", m.cog}};
  return j.dump();
}

std::size_t pump(std::istream& in, Engine& engine) {
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    engine.submit_line(line);
    ++n;
  }
  return n;
}

std::pair<std::string, std::uint16_t> parse_endpoint(std::string_view text) {
  std::string host = "127.0.0.1";
  std::string_view port_text = text;
  if (const auto colon = text.rfind(':'); colon != std::string_view::npos) {
    if (colon > 0) host = std::string(text.substr(0, colon));
    port_text = text.substr(colon + 1);
  }
  unsigned port = 0;
  const auto res = std::from_chars(port_text.data(), port_text.data() + port_text.size(), port);
  if (res.ec != std::errc{} || res.ptr != port_text.data() + port_text.size() || port > 65535) {
    throw std::invalid_argument("bad listen address '" + std::string(text) + "'");
  }
  return {host, static_cast<std::uint16_t>(port)};
}

TcpListener::TcpListener(const std::string& host, std::uint16_t port) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  hints.ai_flags = AI_PASSIVE;
  addrinfo* res = nullptr;
  const std::string service = std::to_string(port);
  if (int rc = ::getaddrinfo(host.empty() ? nullptr : host.c_str(), service.c_str(), &hints, &res);
      rc != 0) {
    throw IoError("cannot resolve " + host + ": " + ::gai_strerror(rc));
  }
  fd_ = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
  if (fd_ < 0) {
    ::freeaddrinfo(res);
    throw IoError(std::string("socket: ") + std::strerror(errno));
  }
  int one = 1;
  ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  if (::bind(fd_, res->ai_addr, res->ai_addrlen) != 0 || ::listen(fd_, 16) != 0) {
    const std::string err = std::strerror(errno);
    ::freeaddrinfo(res);
    ::close(fd_);
    fd_ = -1;
    throw IoError("cannot listen on " + host + ":" + service + ": " + err);
  }
  ::freeaddrinfo(res);
  sockaddr_in addr{};
  socklen_t len = sizeof(addr);
  ::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
}

TcpListener::~TcpListener() {
  if (fd_ >= 0) ::close(fd_);
}

void TcpListener::serve(const std::function<void(std::string_view)>& on_line,
                        std::size_t max_connections, const std::atomic<bool>* stop) {
  std::size_t served = 0;
  std::vector<char> buf(1 << 16);
  while (max_connections == 0 || served < max_connections) {
    if (stop && stop->load()) return;
    const int conn = ::accept(fd_, nullptr, nullptr);
    if (conn < 0) {
      if (errno == EINTR) continue;
      throw IoError(std::string("accept: ") + std::strerror(errno));
    }
    std::string pending;
    for (;;) {
      const ssize_t n = ::recv(conn, buf.data(), buf.size(), 0);
      if (n < 0 && errno == EINTR) continue;
      if (n <= 0) break;
      pending.append(buf.data(), static_cast<std::size_t>(n));
      std::size_t start = 0;
      for (std::size_t nl; (nl = pending.find('\n', start)) != std::string::npos; start = nl + 1) {
        auto line = std::string_view(pending).substr(start, nl - start);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        on_line(line);
      }
      pending.erase(0, start);
    }
    if (!pending.empty()) on_line(pending);
    ::close(conn);
    ++served;
  }
}

}  // namespace fishdet::stream
