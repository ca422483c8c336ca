// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>

#include "gam/synthvos.hpp"
#include "gam/tensor_io.hpp"

using namespace gam;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("gam_test_" + tag);
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string str() const { return path.string(); }
};

bool tensors_equal(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) return false;
  for (int64_t i = 0; i < a.numel(); ++i)
    if (a[i] != b[i]) return false;
  return true;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  REQUIRE(is.good());
  return std::string(std::istreambuf_iterator<char>(is), {});
}

}  // namespace

TEST_CASE("generation is deterministic per seed") {
  vos::GenParams gp;
  gp.H = gp.W = 32;
  gp.n = 4;
  vos::Sequence a = vos::generate(gp, 12345);
  vos::Sequence b = vos::generate(gp, 12345);
  REQUIRE(a.frames.size() == b.frames.size());
  for (size_t t = 0; t < a.frames.size(); ++t) {
    CHECK(tensors_equal(a.frames[t], b.frames[t]));
    CHECK(tensors_equal(a.masks[t], b.masks[t]));
  }
  vos::Sequence c = vos::generate(gp, 54321);
  bool differs = false;
  for (size_t t = 0; t < a.frames.size() && !differs; ++t)
    differs = !tensors_equal(a.frames[t], c.frames[t]);
  CHECK(differs);
}

TEST_CASE("static single object keeps an identical mask") {
  vos::SequenceSpec spec;
  spec.H = spec.W = 32;
  spec.n = 5;
  vos::ObjectSpec obj;
  obj.cls = vos::ShapeClass::rectangle;
  obj.cx = 16;
  obj.cy = 16;
  obj.size = 6;
  obj.c0[0] = 0.9;
  spec.objects.push_back(obj);
  vos::Sequence s = vos::render(spec);
  REQUIRE(s.masks.size() == 5);
  for (size_t t = 1; t < 5; ++t) CHECK(tensors_equal(s.masks[0], s.masks[t]));
  // object visible and labeled 1
  double count = 0;
  for (int64_t i = 0; i < s.masks[0].numel(); ++i) {
    CHECK((s.masks[0][i] == 0.0 || s.masks[0][i] == 1.0));
    count += s.masks[0][i];
  }
  CHECK(count > 0);
}

TEST_CASE("painted pixels equal mask pixels for an unoccluded object") {
  vos::SequenceSpec spec;
  spec.H = spec.W = 32;
  spec.n = 2;
  spec.bg_c0[0] = spec.bg_c0[1] = spec.bg_c0[2] = 0.1;  // flat background
  vos::ObjectSpec obj;
  obj.cls = vos::ShapeClass::ellipse;
  obj.cx = 14;
  obj.cy = 17;
  obj.vx = 1.5;
  obj.size = 7;
  obj.aspect = 0.6;
  obj.rot = 0.3;
  obj.rot_rate = 0.1;
  obj.c0[0] = 0.8;
  obj.c0[1] = 0.2;
  obj.c0[2] = 0.4;  // flat object color far from background
  spec.objects.push_back(obj);
  vos::Sequence s = vos::render(spec);
  for (int t = 0; t < 2; ++t) {
    for (int i = 0; i < 32; ++i)
      for (int j = 0; j < 32; ++j) {
        const bool painted = s.frames[t].at(i, j, 0) != 0.1;
        const bool masked = s.masks[t].at(i, j) == 1.0;
        CHECK(painted == masked);
      }
  }
}

TEST_CASE("generated sequences keep ids contiguous and frame-0 visible") {
  vos::GenParams gp;
  gp.H = gp.W = 32;
  gp.n = 4;
  gp.min_objects = 2;
  gp.max_objects = 3;
  for (uint64_t seed = 1; seed <= 8; ++seed) {
    vos::Sequence s = vos::generate(gp, seed);
    const int M = static_cast<int>(s.spec.objects.size());
    REQUIRE(M >= 2);
    std::set<int> seen_ids;
    for (int64_t i = 0; i < s.masks[0].numel(); ++i) {
      const int id = static_cast<int>(s.masks[0][i]);
      CHECK(id >= 0);
      CHECK(id <= M);
      if (id > 0) seen_ids.insert(id);
    }
    for (int id = 1; id <= M; ++id) CHECK(seen_ids.count(id) == 1);
    // visible on the stride-4 grid as well (training relies on this)
    Tensor small = downsample_nearest(s.masks[0], 4);
    std::set<int> small_ids;
    for (int64_t i = 0; i < small.numel(); ++i)
      if (small[i] > 0) small_ids.insert(static_cast<int>(small[i]));
    for (int id = 1; id <= M; ++id) CHECK(small_ids.count(id) == 1);
  }
}

TEST_CASE("occlusion keeps the z-order consistent") {
  vos::SequenceSpec spec;
  spec.H = spec.W = 24;
  spec.n = 1;
  vos::ObjectSpec a, b;
  a.cls = vos::ShapeClass::rectangle;
  a.cx = a.cy = 12;
  a.size = 6;
  a.z = 0;
  b.cls = vos::ShapeClass::rectangle;
  b.cx = b.cy = 12;
  b.size = 4;
  b.z = 1;  // drawn on top
  spec.objects = {a, b};
  vos::Sequence s = vos::render(spec);
  // pixel centers sit at +0.5, so the small square covers rows/cols 8..15
  for (int i = 8; i <= 15; ++i)
    for (int j = 8; j <= 15; ++j) CHECK(s.masks[0].at(i, j) == 2.0);
  // the ring of the larger, lower object keeps id 1
  CHECK(s.masks[0].at(12, 6) == 1.0);
  CHECK(s.masks[0].at(6, 12) == 1.0);
  CHECK(s.masks[0].at(12, 17) == 1.0);
}

TEST_CASE("dataset build writes a loadable, reproducible tree") {
  TempDir dir("synthvos_ds");
  vos::DatasetParams p;
  p.height = p.width = 32;
  p.train_sequences = 4;
  p.val_sequences = 3;
  p.train_frames = 4;
  p.val_frames = 6;
  p.seed = 2024;
  vos::build_dataset(p, dir.str() + "/a");
  vos::build_dataset(p, dir.str() + "/b");

  vos::DatasetMeta meta = vos::read_dataset_meta(dir.str() + "/a");
  CHECK(meta.height == 32);
  CHECK(meta.train_sequences == 4);
  CHECK(meta.val_sequences == 3);
  CHECK(meta.seed == 2024);
  CHECK(!meta.seen.empty());
  CHECK(!meta.unseen.empty());

  auto train_ids = vos::list_sequences(dir.str() + "/a/train");
  auto val_ids = vos::list_sequences(dir.str() + "/a/val");
  REQUIRE(train_ids.size() == 4);
  REQUIRE(val_ids.size() == 3);
  CHECK(std::is_sorted(train_ids.begin(), train_ids.end()));

  // byte-identical rebuild, file by file
  for (const auto& entry : fs::recursive_directory_iterator(dir.str() + "/a")) {
    if (!entry.is_regular_file()) continue;
    fs::path rel = fs::relative(entry.path(), dir.str() + "/a");
    CHECK(slurp(entry.path()) == slurp(fs::path(dir.str() + "/b") / rel));
  }

  // no held-out class in any training manifest
  std::set<std::string> unseen(meta.unseen.begin(), meta.unseen.end());
  for (const auto& id : train_ids) {
    vos::LoadedSequence s = vos::load_sequence(dir.str() + "/a/train/" + id);
    REQUIRE(static_cast<int>(s.classes.size()) == s.M);
    for (const auto& c : s.classes) CHECK(unseen.count(c) == 0);
    CHECK(s.frames.size() == 4);
    CHECK(s.masks.size() == 4);
  }

  // every held-out class appears somewhere in val
  std::set<std::string> val_classes;
  for (const auto& id : val_ids) {
    vos::LoadedSequence s = vos::load_sequence(dir.str() + "/a/val/" + id);
    for (const auto& c : s.classes) val_classes.insert(c);
    CHECK(s.frames.size() == 6);
  }
  for (const auto& u : meta.unseen) CHECK(val_classes.count(u) == 1);
}

TEST_CASE("loaded sequences match the generator bit for bit") {
  TempDir dir("synthvos_rt");
  vos::DatasetParams p;
  p.height = p.width = 32;
  p.train_sequences = 2;
  p.val_sequences = 1;
  p.train_frames = 3;
  p.val_frames = 3;
  p.seed = 77;
  vos::build_dataset(p, dir.str() + "/ds");
  auto ids = vos::list_sequences(dir.str() + "/ds/train");
  for (const auto& id : ids) {
    vos::LoadedSequence s = vos::load_sequence(dir.str() + "/ds/train/" + id);
    CHECK(s.M >= 1);
    for (const auto& m : s.masks) {
      for (int64_t i = 0; i < m.numel(); ++i) {
        CHECK(m[i] >= 0);
        CHECK(m[i] <= s.M);
      }
    }
    // frames store f32; reloading is idempotent
    vos::LoadedSequence again = vos::load_sequence(dir.str() + "/ds/train/" + id);
    for (size_t t = 0; t < s.frames.size(); ++t) {
      CHECK(tensors_equal(s.frames[t], again.frames[t]));
      CHECK(tensors_equal(s.masks[t], again.masks[t]));
    }
    for (int64_t i = 0; i < s.frames[0].numel(); ++i) {
      CHECK(s.frames[0][i] >= 0.0);
      CHECK(s.frames[0][i] <= 1.0);
    }
  }
}

TEST_CASE("spec parsing reports the offending line") {
  TempDir dir("synthvos_spec");
  const std::string good = dir.str() + "/good.spec";
  {
    std::ofstream os(good);
    os << "# comment\nheight = 32\nwidth = 32\ntrain_sequences = 2\n";
  }
  vos::DatasetParams p = vos::parse_dataset_params(good);
  CHECK(p.height == 32);
  CHECK(p.train_sequences == 2);
  CHECK(p.val_sequences == 40);  // untouched default

  const std::string bad_line = dir.str() + "/bad_line.spec";
  {
    std::ofstream os(bad_line);
    os << "height = 32\nnonsense without equals\n";
  }
  CHECK_THROWS_WITH_AS(vos::parse_dataset_params(bad_line),
                       doctest::Contains(":2:"), config_error);

  const std::string bad_key = dir.str() + "/bad_key.spec";
  {
    std::ofstream os(bad_key);
    os << "height = 32\nwobble = 3\n";
  }
  CHECK_THROWS_WITH_AS(vos::parse_dataset_params(bad_key), doctest::Contains("wobble"),
                       config_error);

  const std::string bad_value = dir.str() + "/bad_value.spec";
  {
    std::ofstream os(bad_value);
    os << "height = thirty\n";
  }
  CHECK_THROWS_WITH_AS(vos::parse_dataset_params(bad_value), doctest::Contains(":1:"),
                       config_error);

  const std::string bad_range = dir.str() + "/bad_range.spec";
  {
    std::ofstream os(bad_range);
    os << "height = 3\n";  // not divisible by 4, outside accepted range
  }
  CHECK_THROWS_AS(vos::parse_dataset_params(bad_range), config_error);

  CHECK_THROWS_AS(vos::parse_dataset_params(dir.str() + "/missing.spec"), config_error);
}

TEST_CASE("class names round-trip") {
  for (vos::ShapeClass c : vos::seen_classes())
    CHECK(vos::class_from_name(vos::class_name(c)) == c);
  for (vos::ShapeClass c : vos::unseen_classes())
    CHECK(vos::class_from_name(vos::class_name(c)) == c);
  CHECK_THROWS_AS(vos::class_from_name("dodecahedron"), error);
  // the two partitions are disjoint
  for (vos::ShapeClass s : vos::seen_classes())
    for (vos::ShapeClass u : vos::unseen_classes()) CHECK(s != u);
}

TEST_CASE("missing sequence files fail loudly") {
  TempDir dir("synthvos_missing");
  fs::create_directories(dir.path / "seq_x");
  {
    std::ofstream os(dir.path / "seq_x" / "manifest.txt");
    os << "n=2\nM=1\nclasses=ellipse\nseed=5\n";
  }
  CHECK_THROWS_AS(vos::load_sequence(dir.str() + "/seq_x"), error);
}
