#include <doctest.h>

#include <cmath>
#include <limits>
#include <map>
#include <random>
#include <set>

#include "randrnn/error.hpp"
#include "randrnn/manifest.hpp"
#include "randrnn/tensor_io.hpp"
#include "test_support.hpp"

using namespace randrnn;
namespace ts = test_support;

TEST_CASE("npy: shape [2] file reads back its values") {
  const auto dir = ts::scratch_dir("npy-read");
  ts::write_bytes(dir / "a.npy", ts::npy_container("<f4", false, "(2,)", ts::le_f4_payload({1.0f, 2.0f})));
  const auto t = read_tensor(dir / "a.npy");
  CHECK(t.shape == Shape{2});
  CHECK(t.data == std::vector<float>{1.0f, 2.0f});
}

TEST_CASE("npy: writer output matches an independent reference encoding byte for byte") {
  for (const auto& [shape, tuple] : std::vector<std::pair<Shape, std::string>>{
           {{2}, "(2,)"}, {{1, 1, 1}, "(1, 1, 1)"}, {{64, 8, 8}, "(64, 8, 8)"}, {{2048}, "(2048,)"}}) {
    std::mt19937_64 rng(element_count(shape));
    const auto t = ts::random_tensor(shape, rng);
    CHECK(encode_npy(t) == ts::npy_container("<f4", false, tuple, ts::le_f4_payload(t.data)));
  }
}

TEST_CASE("npy: [1,1,1] tensor has one element after a 64-byte aligned header") {
  auto t = ActivationTensor::zeros({1, 1, 1});
  t.data[0] = 0.5f;
  const auto bytes = encode_npy(t);
  REQUIRE(bytes.size() % 4 == 0);
  const std::size_t header_len = static_cast<unsigned char>(bytes[8]) | (static_cast<unsigned char>(bytes[9]) << 8);
  const std::size_t payload_start = 10 + header_len;
  CHECK(payload_start % 64 == 0);
  CHECK(bytes.size() - payload_start == 4);
  CHECK(bytes.substr(0, 6) == "\x93NUMPY");
  CHECK(bytes[6] == 1);
  CHECK(bytes[7] == 0);
  CHECK(bytes[payload_start - 1] == '\n');
  float v = 0.0f;
  std::memcpy(&v, bytes.data() + payload_start, 4);
  CHECK(v == 0.5f);
}

TEST_CASE("npy: [64,8,8] payload holds 4096 four-byte words") {
  const auto bytes = encode_npy(ActivationTensor::zeros({64, 8, 8}));
  const std::size_t header_len = static_cast<unsigned char>(bytes[8]) | (static_cast<unsigned char>(bytes[9]) << 8);
  CHECK(bytes.size() - 10 - header_len == 4096 * 4);
}

TEST_CASE("npy: round trip is bit exact for random tensors") {
  const auto dir = ts::scratch_dir("npy-roundtrip");
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<std::uint32_t> bits;
  for (int trial = 0; trial < 50; ++trial) {
    const Shape shape = trial % 2 ? Shape{static_cast<std::size_t>(1 + trial)}
                                  : Shape{static_cast<std::size_t>(1 + trial % 5), 3, 3};
    auto t = ActivationTensor::zeros(shape);
    for (auto& v : t.data) {
      // Arbitrary finite bit patterns, including subnormals and negative zero.
      do {
        const auto b = bits(rng);
        std::memcpy(&v, &b, 4);
      } while (!std::isfinite(v));
    }
    const auto path = dir / fmt::format("t{}.npy", trial);
    write_tensor(t, path);
    const auto back = read_tensor(path);
    CHECK(back.shape == t.shape);
    CHECK(std::memcmp(back.data.data(), t.data.data(), t.data.size() * 4) == 0);
    write_tensor(back, dir / "again.npy");
    CHECK(ts::read_bytes(dir / "again.npy") == ts::read_bytes(path));
  }
}

TEST_CASE("npy: big-endian float64 file is rejected as an unsupported dtype") {
  const auto dir = ts::scratch_dir("npy-be");
  ts::write_bytes(dir / "be.npy", ts::npy_container(">f8", false, "(2,)", ts::be_f8_payload({1.0, 2.0})));
  CHECK_THROWS_AS(read_tensor(dir / "be.npy"), UnsupportedDtypeError);
  ts::write_bytes(dir / "le8.npy", ts::npy_container("<f8", false, "(1,)", std::string(8, '\0')));
  CHECK_THROWS_AS(read_tensor(dir / "le8.npy"), UnsupportedDtypeError);
  ts::write_bytes(dir / "fortran.npy", ts::npy_container("<f4", true, "(1, 1, 1)", ts::le_f4_payload({1.0f})));
  CHECK_THROWS_AS(read_tensor(dir / "fortran.npy"), UnsupportedDtypeError);
}

TEST_CASE("npy: malformed containers raise format errors") {
  const auto good = ts::npy_container("<f4", false, "(2,)", ts::le_f4_payload({1.0f, 2.0f}));
  std::string bad_magic = good;
  bad_magic[1] = 'X';
  CHECK_THROWS_AS(decode_npy(bad_magic), FormatError);
  CHECK_THROWS_AS(decode_npy(good.substr(0, good.size() - 1)), FormatError);
  CHECK_THROWS_AS(decode_npy(good.substr(0, 8)), FormatError);
  std::string v2 = good;
  v2[6] = 2;
  CHECK_THROWS_AS(decode_npy(v2), FormatError);
}

TEST_CASE("npy: invalid tensors are rejected before writing") {
  const auto dir = ts::scratch_dir("npy-invalid");
  auto t = ActivationTensor::zeros({3});
  t.data[1] = std::numeric_limits<float>::quiet_NaN();
  CHECK_THROWS_AS(write_tensor(t, dir / "nan.npy"), ValidationError);
  CHECK_FALSE(std::filesystem::exists(dir / "nan.npy"));
  t.data[1] = std::numeric_limits<float>::infinity();
  CHECK_THROWS_AS(write_tensor(t, dir / "inf.npy"), ValidationError);
  ActivationTensor rank2{{2, 2}, std::vector<float>(4, 0.0f)};
  CHECK_THROWS_AS(write_tensor(rank2, dir / "r2.npy"), ValidationError);
  ActivationTensor mismatch{{3}, std::vector<float>(2, 0.0f)};
  CHECK_THROWS_AS(write_tensor(mismatch, dir / "mm.npy"), ValidationError);
}

TEST_CASE("npy: missing file surfaces the path") {
  try {
    read_tensor("/nonexistent/dir/x.npy");
    FAIL("expected an error");
  } catch (const IoError& e) {
    CHECK(std::string(e.what()).find("/nonexistent/dir/x.npy") != std::string::npos);
  }
}

TEST_CASE("level spec: preprocess inference and validation") {
  CHECK(LevelSpec::infer_preprocess(Shape{4096}, {64, 8, 8}) == Preprocess::reshape);
  CHECK(LevelSpec::infer_preprocess(Shape{256, 56, 56}, {64, 8, 8}) == Preprocess::pool_both);
  CHECK(LevelSpec::infer_preprocess(Shape{64, 56, 56}, {64, 8, 8}) == Preprocess::pool_spatial);
  CHECK(LevelSpec::infer_preprocess(Shape{2048, 7, 7}, {64, 7, 7}) == Preprocess::pool_maps);
  LevelSpec bad;
  bad.level = 9;
  bad.raw_shape = {4096};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  LevelSpec too_big;
  too_big.raw_shape = {100};
  CHECK_THROWS_AS(too_big.validate(), ConfigError);
}

namespace {

std::string manifest_row(const std::string& id, int cat, const std::string& inst, const std::string& mod,
                         const std::string& role) {
  return fmt::format("{},{},{},{},{},,,,,,,\n", id, cat, inst, mod, role);
}

}  // namespace

TEST_CASE("manifest: two rows with categories 0 and 1 load") {
  const std::string csv = std::string(kManifestHeader) + "\n" + manifest_row("a", 0, "i0", "rgb", "train") +
                          manifest_row("b", 1, "i1", "rgb", "test");
  const auto m = parse_manifest(csv, ".");
  validate_manifest(m, false);
  CHECK(m.records.size() == 2);
  CHECK(m.num_categories() == 2);
  CHECK(m.records[1].split_role == SplitRole::test);
}

TEST_CASE("manifest: non-contiguous categories are rejected") {
  const std::string csv = std::string(kManifestHeader) + "\n" + manifest_row("a", 0, "i0", "rgb", "train") +
                          manifest_row("b", 2, "i1", "rgb", "test");
  CHECK_THROWS_AS(validate_manifest(parse_manifest(csv, "."), false), ValidationError);
}

TEST_CASE("manifest: duplicate sample id within a modality is rejected, across modalities allowed") {
  const std::string dup = std::string(kManifestHeader) + "\n" + manifest_row("a", 0, "i0", "rgb", "train") +
                          manifest_row("a", 0, "i0", "rgb", "test");
  try {
    validate_manifest(parse_manifest(dup, "."), false);
    FAIL("expected duplicate error");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("duplicate sample_id: a (rgb)") != std::string::npos);
  }
  const std::string pair = std::string(kManifestHeader) + "\n" + manifest_row("a", 0, "i0", "rgb", "train") +
                           manifest_row("a", 0, "i0", "depth", "train");
  CHECK_NOTHROW(validate_manifest(parse_manifest(pair, "."), false));
}

TEST_CASE("manifest: missing column and unresolvable paths are rejected") {
  CHECK_THROWS_AS(parse_manifest("sample_id,category\na,0\n", "."), ValidationError);
  const auto dir = ts::scratch_dir("manifest-paths");
  ts::write_bytes(dir / "m.csv", std::string(kManifestHeader) + "\na,0,i0,rgb,train,missing.npy,,,,,,\n");
  CHECK_THROWS_AS(load_manifest(dir / "m.csv"), ValidationError);
}

TEST_CASE("manifest: write then load round trips with relative paths") {
  const auto dir = ts::scratch_dir("manifest-roundtrip");
  write_tensor(ActivationTensor::zeros({4}), dir / "t" / "a.npy");
  ts::write_bytes(dir / "m.csv", std::string(kManifestHeader) + "\na,0,i0,rgb,train,t/a.npy,,,,,,\nb,1,i1,depth,test,,t/a.npy,,,,,\n");
  const auto m = load_manifest(dir / "m.csv");
  CHECK(m.records[0].level_path(1) == dir / "t" / "a.npy");
  CHECK_FALSE(m.records[0].has_level(2));
  CHECK(m.records[1].has_level(2));
  write_manifest(m, dir / "copy" / "m2.csv");
  const auto again = load_manifest(dir / "copy" / "m2.csv");
  REQUIRE(again.records.size() == 2);
  CHECK(std::filesystem::equivalent(again.records[0].level_path(1), dir / "t" / "a.npy"));
  CHECK(again.records[1].modality == Modality::depth);
}

namespace {

DatasetManifest toy_manifest(int categories, int instances_per_category, int images_per_instance) {
  std::string csv = std::string(kManifestHeader) + "\n";
  int n = 0;
  for (int c = 0; c < categories; ++c)
    for (int i = 0; i < instances_per_category; ++i)
      for (int k = 0; k < images_per_instance; ++k)
        csv += manifest_row(fmt::format("s{}", n++), c, fmt::format("c{}_i{}", c, i), "rgb", "train");
  return parse_manifest(csv, ".");
}

}  // namespace

TEST_CASE("split: 2 categories x 2 instances x 3 images gives 6 test and 6 train") {
  std::string csv = std::string(kManifestHeader) + "\n";
  int n = 0;
  for (const auto& [cat, inst] : std::vector<std::pair<int, std::string>>{{0, "a"}, {0, "b"}, {1, "c"}, {1, "d"}})
    for (int k = 0; k < 3; ++k) csv += manifest_row(fmt::format("s{}", n++), cat, inst, "rgb", "train");
  const auto split = make_instance_split(parse_manifest(csv, "."), {{0, "a"}, {1, "c"}});
  int test = 0;
  for (const auto& r : split.records) test += r.split_role == SplitRole::test;
  CHECK(test == 6);
  CHECK(split.records.size() - test == 6);
}

TEST_CASE("split: a held-out instance absent from the manifest names its category") {
  const auto m = toy_manifest(2, 2, 1);
  try {
    make_instance_split(m, {{0, "c0_i0"}, {1, "nope"}});
    FAIL("expected an error");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("category 1") != std::string::npos);
  }
  CHECK_THROWS_AS(make_instance_split(toy_manifest(2, 1, 2), {{0, "c0_i0"}, {1, "c1_i0"}}), ValidationError);
}

TEST_CASE("split: instance-structured toy holds out exactly one instance per category") {
  // 51 categories sharing 300 instances: 45 categories with 6, 6 with 5.
  std::string csv = std::string(kManifestHeader) + "\n";
  int n = 0;
  std::map<int, int> instances_of;
  for (int c = 0; c < 51; ++c) instances_of[c] = c < 45 ? 6 : 5;
  int total_instances = 0;
  for (const auto& [c, k] : instances_of) total_instances += k;
  REQUIRE(total_instances == 300);
  std::mt19937_64 rng(51);
  std::uniform_int_distribution<int> images(2, 6);
  for (const auto& [c, k] : instances_of)
    for (int i = 0; i < k; ++i) {
      const int count = images(rng);
      for (int j = 0; j < count; ++j) {
        csv += manifest_row(fmt::format("s{}", n), c, fmt::format("c{}_i{}", c, i), "rgb", "train");
        csv += manifest_row(fmt::format("s{}", n), c, fmt::format("c{}_i{}", c, i), "depth", "train");
        ++n;
      }
    }
  const auto m = parse_manifest(csv, ".");
  validate_manifest(m, false);

  for (const Seed seed : {1u, 2u, 3u}) {
    const auto heldout = draw_heldout_instances(m, seed);
    CHECK(heldout.size() == 51);
    const auto split = make_instance_split(m, heldout);

    // Oracle: count by direct scan over the generated rows.
    std::set<std::string> test_instances;
    std::set<std::string> train_instances;
    std::size_t expected_test = 0;
    for (const auto& r : m.records)
      if (heldout.at(r.category) == r.instance_id) ++expected_test;
    std::size_t test_rows = 0;
    for (const auto& r : split.records) {
      (r.split_role == SplitRole::test ? test_instances : train_instances).insert(r.instance_id);
      test_rows += r.split_role == SplitRole::test;
    }
    CHECK(test_instances.size() == 51);
    CHECK(train_instances.size() == 249);
    CHECK(test_rows == expected_test);
    for (const auto& inst : test_instances) CHECK_FALSE(train_instances.contains(inst));
    CHECK(split.records.size() == m.records.size());
  }
  CHECK(draw_heldout_instances(m, 5) == draw_heldout_instances(m, 5));
}
