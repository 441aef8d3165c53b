#include "fishdet/windows.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <stdexcept>

#include "fishdet/errors.hpp"

namespace fishdet::train {

std::size_t WindowSet::positives() const {
  std::size_t n = 0;
  for (float v : y) n += v > 0.5f ? 1 : 0;
  return n;
}

namespace {

template <typename Traj, typename MessageOf, typename LabelOf>
WindowSet cut_windows(const std::vector<Traj>& data, std::size_t w, std::size_t stride,
                      MessageOf message_of, LabelOf label_of, bool labeled) {
  if (w < 1) throw std::invalid_argument("window length must be >= 1");
  if (stride < 1) throw std::invalid_argument("stride must be >= 1");
  std::size_t count = 0;
  for (const auto& t : data) {
    const std::size_t len = message_of.size(t);
    if (len >= w) count += (len - w) / stride + 1;
  }
  WindowSet out;
  out.x = nn::Tensor<float>({count, w, 4});
  out.mmsi.reserve(count);
  out.end_time.reserve(count);
  if (labeled) out.y.reserve(count);
  std::size_t b = 0;
  for (const auto& t : data) {
    const std::size_t len = message_of.size(t);
    if (len < w) continue;
    for (std::size_t off = 0; off + w <= len; off += stride, ++b) {
      for (std::size_t k = 0; k < w; ++k) {
        const AisMessage& m = message_of(t, off + k);
        float* dst = out.x.data.data() + (b * w + k) * 4;
        dst[kLat] = static_cast<float>(m.lat);
        dst[kLon] = static_cast<float>(m.lon);
        dst[kCog] = static_cast<float>(m.cog);
        dst[kSog] = static_cast<float>(m.sog);
      }
      const AisMessage& last = message_of(t, off + w - 1);
      out.mmsi.push_back(last.mmsi);
      out.end_time.push_back(last.timestamp);
      if (labeled) out.y.push_back(label_of(t, off + w - 1));
    }
  }
  return out;
}

struct LabeledAccess {
  std::size_t size(const labeling::LabeledTrajectory& t) const { return t.rows.size(); }
  const AisMessage& operator()(const labeling::LabeledTrajectory& t, std::size_t i) const {
    return t.rows[i].message;
  }
};

struct PlainAccess {
  std::size_t size(const Trajectory& t) const { return t.messages.size(); }
  const AisMessage& operator()(const Trajectory& t, std::size_t i) const { return t.messages[i]; }
};

}  // namespace

WindowSet make_windows(const std::vector<labeling::LabeledTrajectory>& data, std::size_t w,
                       std::size_t stride) {
  return cut_windows(
      data, w, stride, LabeledAccess{},
      [](const labeling::LabeledTrajectory& t, std::size_t i) {
        return t.rows[i].label == labeling::Label::fishing ? 1.0f : 0.0f;
      },
      true);
}

WindowSet make_windows(const std::vector<Trajectory>& data, std::size_t w, std::size_t stride) {
  return cut_windows(
      data, w, stride, PlainAccess{}, [](const Trajectory&, std::size_t) { return 0.0f; }, false);
}

WindowSet select(const WindowSet& set, std::span<const std::size_t> rows) {
  const std::size_t w = set.window();
  WindowSet out;
  out.x = nn::Tensor<float>({rows.size(), w, 4});
  const std::size_t stride = w * 4;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const std::size_t r = rows[i];
    std::memcpy(out.x.data.data() + i * stride, set.x.data.data() + r * stride,
                stride * sizeof(float));
    out.mmsi.push_back(set.mmsi[r]);
    out.end_time.push_back(set.end_time[r]);
    if (!set.y.empty()) out.y.push_back(set.y[r]);
  }
  return out;
}

NormStats NormStats::fit(std::span<const std::array<double, 4>> rows) {
  if (rows.empty()) throw ConfigError("cannot compute normalization statistics on zero rows");
  NormStats st;
  for (std::size_t a = 0; a < 4; ++a) {
    double sum = 0.0, lo = rows[0][a], hi = rows[0][a];
    for (const auto& r : rows) {
      sum += r[a];
      lo = std::min(lo, r[a]);
      hi = std::max(hi, r[a]);
    }
    const double mean = sum / static_cast<double>(rows.size());
    double ss = 0.0;
    for (const auto& r : rows) ss += (r[a] - mean) * (r[a] - mean);
    st.attrs[a] = {mean, std::sqrt(ss / static_cast<double>(rows.size())), lo, hi};
  }
  st.validate();
  return st;
}

NormStats NormStats::fit(const std::vector<labeling::LabeledTrajectory>& data, std::size_t w,
                         std::size_t stride) {
  std::vector<std::array<double, 4>> rows;
  for (const auto& t : data) {
    const std::size_t len = t.rows.size();
    if (len < w) continue;
    std::vector<bool> covered(len, false);
    for (std::size_t off = 0; off + w <= len; off += stride)
      for (std::size_t k = 0; k < w; ++k) covered[off + k] = true;
    for (std::size_t i = 0; i < len; ++i) {
      if (!covered[i]) continue;
      const auto& m = t.rows[i].message;
      // Round through float so stats see exactly what the model sees.
      rows.push_back({static_cast<float>(m.lat), static_cast<float>(m.lon),
                      static_cast<float>(m.cog), static_cast<float>(m.sog)});
    }
  }
  return fit(rows);
}

void NormStats::validate() const {
  for (std::size_t a = 0; a < 4; ++a) {
    const auto& s = attrs[a];
    if (!(s.std > 0.0) || !(s.min < s.max)) {
      throw ConfigError(std::string("degenerate normalization statistics for attribute '") +
                        kAttrNames[a] + "' (constant in the training data)");
    }
  }
}

double NormStats::apply(std::size_t attr, double x) const {
  const auto& s = attrs[attr];
  const double z = (x - s.mean) / s.std;
  const double zmin = (s.min - s.mean) / s.std;
  const double zmax = (s.max - s.mean) / s.std;
  return (z - zmin) / (zmax - zmin);
}

void NormStats::apply(std::span<float> values) const {
  if (values.size() % 4 != 0) throw std::invalid_argument("normalize: size not a multiple of 4");
  for (std::size_t i = 0; i < values.size(); ++i) {
    values[i] = static_cast<float>(apply(i % 4, values[i]));
  }
}

nn::Tensor<float> NormStats::normalized(const nn::Tensor<float>& x) const {
  nn::Tensor<float> out = x;
  apply(std::span<float>(out.data));
  return out;
}

std::uint64_t NormStats::hash() const {
  std::uint64_t h = 1469598103934665603ull;
  for (const auto& s : attrs) {
    for (double v : {s.mean, s.std, s.min, s.max}) {
      const auto bits = std::bit_cast<std::uint64_t>(v);
      for (int i = 0; i < 8; ++i) {
        h ^= (bits >> (8 * i)) & 0xffu;
        h *= 1099511628211ull;
      }
    }
  }
  return h;
}

nlohmann::json NormStats::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  for (std::size_t a = 0; a < 4; ++a) {
    const auto& s = attrs[a];
    j[kAttrNames[a]] = {{"mean", s.mean}, {"std", s.std}, {"min", s.min}, {"max", s.max}};
  }
  return j;
}

NormStats NormStats::from_json(const nlohmann::json& j) {
  NormStats st;
  for (std::size_t a = 0; a < 4; ++a) {
    const auto& s = j.at(kAttrNames[a]);
    st.attrs[a] = {s.at("mean").get<double>(), s.at("std").get<double>(),
                   s.at("min").get<double>(), s.at("max").get<double>()};
  }
  st.validate();
  return st;
}

}  // namespace fishdet::train
