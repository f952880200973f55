#include "randrnn/feature_store.hpp"

#include <algorithm>
#include <memory>
#include <set>

#include <fmt/format.h>
#include <openssl/evp.h>

#include "randrnn/error.hpp"
#include "randrnn/parallel.hpp"
#include "randrnn/pooling.hpp"
#include "randrnn/rnn_encoder.hpp"

namespace randrnn {

namespace {

// Samples preprocessed and encoded together; bounds peak memory only, since
// encoded rows do not depend on batch composition.
constexpr std::size_t kChunkSamples = 256;

// Bump when the meaning of cached feature files changes.
constexpr std::string_view kCacheFormat = "randrnn-features/1";

}  // namespace

std::string sha256_hex(std::initializer_list<std::string_view> parts) {
  const std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) throw Error("SHA-256 initialisation failed");
  for (const auto part : parts)
    if (EVP_DigestUpdate(ctx.get(), part.data(), part.size()) != 1) throw Error("SHA-256 update failed");
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  if (EVP_DigestFinal_ex(ctx.get(), digest, &length) != 1) throw Error("SHA-256 finalisation failed");
  std::string hex;
  hex.reserve(2 * length);
  for (unsigned int i = 0; i < length; ++i) hex += fmt::format("{:02x}", digest[i]);
  return hex;
}

FeatureStore::FeatureStore(const RunConfig& cfg, const DatasetManifest& manifest, std::size_t workers)
    : cfg_(cfg), workers_(std::max<std::size_t>(workers, 1)) {
  for (const Modality m : {Modality::rgb, Modality::depth}) records_[m] = manifest.select(m);
}

const std::vector<const SampleRecord*>& FeatureStore::records(Modality m) const { return records_.at(m); }

const FeatureMatrix& FeatureStore::features(const EncodingKey& key) {
  const auto it = memo_.find(key);
  if (it != memo_.end()) return it->second;
  return memo_.emplace(key, encode(key)).first->second;
}

std::string FeatureStore::settings_slice(const EncodingKey& key) const {
  const auto& spec = cfg_.level_spec(key.level);
  return fmt::format("{}|level={}|raw={}|target={}|preprocess={}|pool={}|uniform={}|rnns={}|tree_depth={}|seed={}\n",
                     kCacheFormat, key.level, shape_string(spec.raw_shape), shape_string(spec.target_shape),
                     to_string(spec.preprocess), to_string(key.method), cfg_.force_uniform_pool_weights,
                     cfg_.encoder.num_rnns, cfg_.encoder.tree_depth, key.seed);
}

FeatureMatrix FeatureStore::encode(const EncodingKey& key) {
  const auto& recs = records(key.modality);
  const auto enc = cfg_.encoder_for(key.level, key.seed);
  const LevelPreprocessor preprocess(cfg_.level_spec(key.level), key.method, key.seed, cfg_.force_uniform_pool_weights);
  const std::string slice = settings_slice(key);
  const std::size_t dim = enc.feature_dim();
  const auto cache_dir = cfg_.output_dir / "cache";

  FeatureMatrix out(recs.size(), dim);
  for (std::size_t begin = 0; begin < recs.size(); begin += kChunkSamples) {
    const std::size_t count = std::min(kChunkSamples, recs.size() - begin);
    std::vector<std::filesystem::path> cache_paths(count);
    std::vector<ActivationTensor> canonical(count);
    std::vector<std::uint8_t> from_cache(count, 0);

    parallel_for(count, workers_, [&](std::size_t j) {
      const auto& rec = *recs[begin + j];
      try {
        if (!rec.has_level(key.level)) throw ValidationError(fmt::format("no tensor for level {}", key.level));
        const auto bytes = read_file_bytes(rec.level_path(key.level));
        if (cfg_.cache) {
          const auto digest = sha256_hex({slice, bytes});
          cache_paths[j] = cache_dir / digest.substr(0, 2) / (digest + ".npy");
          if (std::filesystem::exists(cache_paths[j])) {
            const auto cached = read_tensor(cache_paths[j]);
            if (cached.shape == Shape{dim}) {
              std::copy(cached.data.begin(), cached.data.end(), out.row(begin + j).begin());
              from_cache[j] = 1;
              return;
            }
          }
        }
        canonical[j] = preprocess(decode_npy(bytes));
      } catch (...) {
        rethrow_with_context(fmt::format("encode {} level {} sample '{}'", to_string(key.modality), key.level,
                                         rec.sample_id));
      }
    });

    std::vector<std::size_t> pending;
    std::vector<ActivationTensor> batch;
    for (std::size_t j = 0; j < count; ++j)
      if (!from_cache[j]) {
        pending.push_back(j);
        batch.push_back(std::move(canonical[j]));
      }
    hits_ += count - pending.size();
    misses_ += pending.size();
    if (pending.empty()) continue;

    const auto fresh = encode_batch(batch, enc, key.level, workers_);
    for (std::size_t p = 0; p < pending.size(); ++p) {
      const std::size_t j = pending[p];
      std::copy(fresh.row(p).begin(), fresh.row(p).end(), out.row(begin + j).begin());
      if (cfg_.cache) {
        ActivationTensor t;
        t.shape = {dim};
        t.data.assign(fresh.row(p).begin(), fresh.row(p).end());
        write_tensor(t, cache_paths[j]);
      }
    }
  }
  return out;
}

std::string feature_file_name(std::string_view sample_id) {
  if (sample_id.empty()) throw ValidationError("empty sample id");
  std::string name(sample_id);
  for (char& ch : name) {
    const bool safe = (ch >= 'a' && ch <= 'z') || (ch >= 'A' && ch <= 'Z') || (ch >= '0' && ch <= '9') || ch == '_' ||
                      ch == '-' || ch == '.';
    if (!safe) ch = '_';
  }
  if (name.front() == '.') name.front() = '_';
  return name + ".npy";
}

void write_feature_files(const std::filesystem::path& dir, const std::vector<const SampleRecord*>& records,
                         const FeatureMatrix& features) {
  if (records.size() != features.rows) throw ShapeError("feature rows do not match records");
  std::set<std::string> used;
  for (std::size_t i = 0; i < records.size(); ++i) {
    auto name = feature_file_name(records[i]->sample_id);
    if (!used.insert(name).second)
      throw ValidationError(fmt::format("sample id '{}' collides with another id as a file name", records[i]->sample_id));
    ActivationTensor t;
    t.shape = {features.cols};
    t.data.assign(features.row(i).begin(), features.row(i).end());
    write_tensor(t, dir / name);
  }
}

}  // namespace randrnn
