#include "randrnn/pooling.hpp"

#include <algorithm>
#include <limits>

#include <fmt/format.h>

#include "randrnn/error.hpp"

namespace randrnn {

namespace {

void require_source(const ActivationTensor& t, const PoolSpec& spec) {
  spec.validate();
  if (t.shape != spec.source_shape())
    throw ShapeError(fmt::format("pool input {} does not match spec source {}", shape_string(t.shape),
                                 shape_string(spec.source_shape())));
}

// Visits every pooling area: fn(out_map, out_index, member_offsets) where
// member offsets index the flat input in the same order as the weights.
template <typename Reduce>
ActivationTensor pool_with(const ActivationTensor& t, const PoolSpec& spec, Reduce&& reduce) {
  require_source(t, spec);
  auto out = ActivationTensor::zeros(spec.target_shape(), t.level);
  const std::size_t area = spec.area();
  std::vector<std::size_t> members(area);
  const std::size_t s = spec.source_side;
  if (spec.mode == PoolMode::maps) {
    const std::size_t plane = s * s;
    for (std::size_t g = 0; g < spec.target_maps; ++g)
      for (std::size_t p = 0; p < plane; ++p) {
        for (std::size_t j = 0; j < area; ++j) members[j] = (g * area + j) * plane + p;
        out.data[g * plane + p] = reduce(g, members);
      }
  } else {
    const std::size_t f = s / spec.target_side;
    const std::size_t ts = spec.target_side;
    for (std::size_t k = 0; k < spec.source_maps; ++k)
      for (std::size_t oy = 0; oy < ts; ++oy)
        for (std::size_t ox = 0; ox < ts; ++ox) {
          for (std::size_t dy = 0; dy < f; ++dy)
            for (std::size_t dx = 0; dx < f; ++dx)
              members[dy * f + dx] = k * s * s + (oy * f + dy) * s + (ox * f + dx);
          out.data[(k * ts + oy) * ts + ox] = reduce(k, members);
        }
  }
  return out;
}

}  // namespace

std::string_view to_string(PoolMethod m) noexcept {
  switch (m) {
    case PoolMethod::random: return "random";
    case PoolMethod::max: return "max";
    case PoolMethod::average: return "average";
  }
  return "?";
}

PoolMethod parse_pool_method(std::string_view text) {
  if (text == "random") return PoolMethod::random;
  if (text == "max") return PoolMethod::max;
  if (text == "average") return PoolMethod::average;
  throw ConfigError(fmt::format("unknown pool method '{}'", text));
}

PoolSpec PoolSpec::over_maps(std::size_t maps, std::size_t side, std::size_t target_maps, PoolMethod method) {
  return {PoolMode::maps, maps, side, target_maps, side, method};
}

PoolSpec PoolSpec::over_space(std::size_t maps, std::size_t side, std::size_t target_side, PoolMethod method) {
  return {PoolMode::spatial, maps, side, maps, target_side, method};
}

std::size_t PoolSpec::area() const noexcept {
  if (mode == PoolMode::maps) return target_maps == 0 ? 0 : source_maps / target_maps;
  const std::size_t f = target_side == 0 ? 0 : source_side / target_side;
  return f * f;
}

void PoolSpec::validate() const {
  if (source_maps == 0 || source_side == 0 || target_maps == 0 || target_side == 0)
    throw ShapeError("pool spec has a zero extent");
  if (mode == PoolMode::maps) {
    if (target_side != source_side || target_maps >= source_maps || source_maps % target_maps != 0)
      throw ShapeError(fmt::format("maps pooling {}x{} -> {}x{} needs K' < K, K divisible by K' and s' = s",
                                   source_maps, source_side, target_maps, target_side));
  } else {
    if (target_maps != source_maps || target_side >= source_side || source_side % target_side != 0)
      throw ShapeError(fmt::format("spatial pooling {}x{} -> {}x{} needs K' = K, s' < s and s divisible by s'",
                                   source_maps, source_side, target_maps, target_side));
  }
}

PoolWeights PoolWeights::draw(const PoolSpec& spec, Seed master, int level, std::size_t stage) {
  spec.validate();
  PoolWeights w{spec, std::vector<float>(spec.target_maps * spec.area())};
  const CounterRng rng(master, StreamDomain::pool_weights, static_cast<std::uint64_t>(level), stage);
  fill_symmetric_uniform(rng, w.values.data(), w.values.size());
  return w;
}

PoolWeights PoolWeights::constant(const PoolSpec& spec, float value) {
  spec.validate();
  return {spec, std::vector<float>(spec.target_maps * spec.area(), value)};
}

ActivationTensor random_pool(const ActivationTensor& t, const PoolWeights& weights) {
  if (weights.values.size() != weights.spec.target_maps * weights.spec.area())
    throw ShapeError("pool weight count does not match spec");
  return pool_with(t, weights.spec, [&](std::size_t out_map, const std::vector<std::size_t>& members) {
    const float* w = weights.of_map(out_map);
    double acc = 0.0;
    for (std::size_t j = 0; j < members.size(); ++j)
      acc += static_cast<double>(w[j]) * static_cast<double>(t.data[members[j]]);
    return static_cast<float>(acc);
  });
}

ActivationTensor random_pool(const ActivationTensor& t, const PoolSpec& spec, Seed seed, int level,
                             std::size_t stage) {
  return random_pool(t, PoolWeights::draw(spec, seed, level, stage));
}

ActivationTensor max_pool(const ActivationTensor& t, const PoolSpec& spec) {
  return pool_with(t, spec, [&](std::size_t, const std::vector<std::size_t>& members) {
    float best = -std::numeric_limits<float>::infinity();
    for (const auto m : members) best = std::max(best, t.data[m]);
    return best;
  });
}

ActivationTensor avg_pool(const ActivationTensor& t, const PoolSpec& spec) {
  return pool_with(t, spec, [&](std::size_t, const std::vector<std::size_t>& members) {
    double acc = 0.0;
    for (const auto m : members) acc += t.data[m];
    return static_cast<float>(acc / static_cast<double>(members.size()));
  });
}

ActivationTensor reshape_to_form(const ActivationTensor& t, const Shape& target) {
  if (element_count(target) != t.size())
    throw ShapeError(fmt::format("cannot reshape {} ({} elements) into {} ({} elements)", shape_string(t.shape),
                                 t.size(), shape_string(target), element_count(target)));
  ActivationTensor out = t;
  out.shape = target;
  return out;
}

LevelPreprocessor::LevelPreprocessor(const LevelSpec& spec, PoolMethod method, Seed master, bool uniform_weights)
    : spec_(spec) {
  spec_.validate();
  const auto& raw = spec_.raw_shape;
  const auto [tk, ts, ts2] = spec_.target_shape;
  const Shape target{tk, ts, ts2};
  auto unreachable = [&](std::string_view why) {
    return ConfigError(fmt::format("level {}: cannot reach {} from {} by {}: {}", spec_.level, shape_string(target),
                                   shape_string(raw), to_string(spec_.preprocess), why));
  };

  if (spec_.preprocess == Preprocess::reshape) {
    if (element_count(raw) != element_count(target)) throw unreachable("element counts differ");
    staged_ = target;
    return;
  }

  std::size_t maps = 0;
  std::size_t side = 0;
  if (raw.size() == 1) {
    if (spec_.preprocess != Preprocess::pool_maps) throw unreachable("flat input has no spatial extent to pool");
    if (raw[0] % (ts * ts) != 0) throw unreachable("flat length not divisible by s'^2");
    maps = raw[0] / (ts * ts);
    side = ts;
  } else {
    if (raw[1] != raw[2]) throw unreachable("maps are not square");
    maps = raw[0];
    side = raw[1];
  }
  staged_ = {maps, side, side};

  const bool pool_maps = spec_.preprocess == Preprocess::pool_maps || spec_.preprocess == Preprocess::pool_both;
  const bool pool_space = spec_.preprocess == Preprocess::pool_spatial || spec_.preprocess == Preprocess::pool_both;
  try {
    if (pool_maps) {
      pools_.push_back(PoolSpec::over_maps(maps, side, tk, method));
      maps = tk;
    }
    if (pool_space) {
      pools_.push_back(PoolSpec::over_space(maps, side, ts, method));
      side = ts;
    }
    for (const auto& p : pools_) p.validate();
  } catch (const ShapeError& e) {
    throw unreachable(e.what());
  }
  if (maps != tk || side != ts) throw unreachable("pool steps do not land on the target");

  if (method == PoolMethod::random)
    for (std::size_t stage = 0; stage < pools_.size(); ++stage)
      weights_.push_back(uniform_weights
                             ? PoolWeights::constant(pools_[stage], 1.0f / static_cast<float>(pools_[stage].area()))
                             : PoolWeights::draw(pools_[stage], master, spec_.level, stage));
}

ActivationTensor LevelPreprocessor::operator()(const ActivationTensor& raw) const {
  if (raw.shape != spec_.raw_shape)
    throw ShapeError(fmt::format("level {}: input {} does not match declared raw shape {}", spec_.level,
                                 shape_string(raw.shape), shape_string(spec_.raw_shape)));
  ActivationTensor t = reshape_to_form(raw, staged_);
  t.level = spec_.level;
  for (std::size_t stage = 0; stage < pools_.size(); ++stage) {
    switch (pools_[stage].method) {
      case PoolMethod::random: t = random_pool(t, weights_[stage]); break;
      case PoolMethod::max: t = max_pool(t, pools_[stage]); break;
      case PoolMethod::average: t = avg_pool(t, pools_[stage]); break;
    }
  }
  return t;
}

ActivationTensor preprocess_level(const ActivationTensor& t, const LevelSpec& spec, Seed seed, PoolMethod method) {
  return LevelPreprocessor(spec, method, seed)(t);
}

}  // namespace randrnn
