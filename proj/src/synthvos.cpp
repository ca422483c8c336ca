// SPDX-License-Identifier: Apache-2.0
#include "gam/synthvos.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include "gam/kv.hpp"
#include "gam/rng.hpp"
#include "gam/tensor_io.hpp"

namespace fs = std::filesystem;

namespace gam::vos {

namespace {
const std::vector<std::pair<ShapeClass, std::string>>& class_table() {
  static const std::vector<std::pair<ShapeClass, std::string>> t = {
      {ShapeClass::ellipse, "ellipse"},   {ShapeClass::rectangle, "rectangle"},
      {ShapeClass::triangle, "triangle"}, {ShapeClass::annulus, "annulus"},
      {ShapeClass::cross, "cross"},       {ShapeClass::star, "star"}};
  return t;
}
}  // namespace

std::string class_name(ShapeClass c) {
  for (const auto& [cls, name] : class_table())
    if (cls == c) return name;
  fail("unknown shape class id ", static_cast<int>(c));
}

ShapeClass class_from_name(const std::string& name) {
  for (const auto& [cls, n] : class_table())
    if (n == name) return cls;
  fail("unknown shape class '", name, "'");
}

const std::vector<ShapeClass>& seen_classes() {
  static const std::vector<ShapeClass> v = {ShapeClass::ellipse, ShapeClass::rectangle,
                                            ShapeClass::triangle, ShapeClass::annulus};
  return v;
}

const std::vector<ShapeClass>& unseen_classes() {
  static const std::vector<ShapeClass> v = {ShapeClass::cross, ShapeClass::star};
  return v;
}

namespace {

struct Pt {
  double x, y;
};

bool point_in_poly(const std::vector<Pt>& poly, double x, double y) {
  bool in = false;
  for (size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
    const Pt& a = poly[i];
    const Pt& b = poly[j];
    if ((a.y > y) != (b.y > y)) {
      const double xint = b.x + (y - b.y) * (a.x - b.x) / (a.y - b.y);
      if (x < xint) in = !in;
    }
  }
  return in;
}

std::vector<Pt> shape_polygon(ShapeClass cls, double a) {
  constexpr double pi = std::numbers::pi;
  std::vector<Pt> poly;
  switch (cls) {
    case ShapeClass::triangle:
      for (int k = 0; k < 3; ++k) {
        const double ang = pi / 2 + 2.0 * pi * k / 3.0;
        poly.push_back({a * std::cos(ang), a * std::sin(ang)});
      }
      return poly;
    case ShapeClass::cross: {
      const double t = 0.35 * a;
      return {{a, t},  {t, t},  {t, a},  {-t, a},  {-t, t},  {-a, t},
              {-a, -t}, {-t, -t}, {-t, -a}, {t, -a}, {t, -t}, {a, -t}};
    }
    case ShapeClass::star:
      for (int k = 0; k < 10; ++k) {
        const double r = (k % 2 == 0) ? a : 0.42 * a;
        const double ang = pi / 2 + pi * k / 5.0;
        poly.push_back({r * std::cos(ang), r * std::sin(ang)});
      }
      return poly;
    default:
      fail("shape_polygon: class ", class_name(cls), " is analytic");
  }
}

bool inside_local(const ObjectSpec& o, double u, double v) {
  const double a = o.size;
  switch (o.cls) {
    case ShapeClass::ellipse: {
      const double b = a * o.aspect;
      return (u * u) / (a * a) + (v * v) / (b * b) <= 1.0;
    }
    case ShapeClass::rectangle:
      return std::abs(u) <= a && std::abs(v) <= a * o.aspect;
    case ShapeClass::annulus: {
      const double r2 = u * u + v * v;
      const double rin = 0.45 * a;
      return r2 <= a * a && r2 >= rin * rin;
    }
    default:
      return point_in_poly(shape_polygon(o.cls, a), u, v);
  }
}

// Integer lattice hash -> [0,1); value noise is bilinear between corners.
double lattice_hash(uint64_t seed, int64_t ix, int64_t iy) {
  uint64_t z = seed ^ (0x9e3779b97f4a7c15ull * static_cast<uint64_t>(ix + 0x10000)) ^
               (0xbf58476d1ce4e5b9ull * static_cast<uint64_t>(iy + 0x20000));
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  z ^= z >> 31;
  return static_cast<double>(z >> 11) * 0x1.0p-53;
}

double value_noise(uint64_t seed, double u, double v, double cell) {
  const double su = u / cell, sv = v / cell;
  const auto fu = std::floor(su), fv = std::floor(sv);
  const int64_t iu = static_cast<int64_t>(fu), iv = static_cast<int64_t>(fv);
  const double tu = su - fu, tv = sv - fv;
  const double n00 = lattice_hash(seed, iu, iv);
  const double n01 = lattice_hash(seed, iu, iv + 1);
  const double n10 = lattice_hash(seed, iu + 1, iv);
  const double n11 = lattice_hash(seed, iu + 1, iv + 1);
  const double a = n00 * (1 - tu) + n10 * tu;
  const double b = n01 * (1 - tu) + n11 * tu;
  return a * (1 - tv) + b * tv;
}

void texture_color(int texture, const double* c0, const double* c1, uint64_t noise_seed,
                   double u, double v, double scale, double out[3]) {
  double t = 0.0;
  switch (texture) {
    case 0: t = 0.0; break;
    case 1: t = std::clamp(u / (2.0 * scale) + 0.5, 0.0, 1.0); break;
    default: t = value_noise(noise_seed, u, v, std::max(2.0, scale / 2.0)); break;
  }
  for (int c = 0; c < 3; ++c)
    out[c] = std::clamp(c0[c] + t * (c1[c] - c0[c]), 0.0, 1.0);
}

struct Placed {
  double cx, cy, cs, sn;  // frame-t center and rotation
  double c0[3], c1[3];    // frame-t texture color endpoints
};

Placed place(const ObjectSpec& o, int t) {
  const double th = o.rot + o.rot_rate * t;
  Placed pl{o.cx + o.vx * t, o.cy + o.vy * t, std::cos(th), std::sin(th), {}, {}};
  for (int c = 0; c < 3; ++c) {
    pl.c0[c] = std::clamp(o.c0[c] + o.dc0[c] * t, 0.0, 1.0);
    pl.c1[c] = std::clamp(o.c1[c] + o.dc1[c] * t, 0.0, 1.0);
  }
  return pl;
}

}  // namespace

Sequence render(const SequenceSpec& spec) {
  check(spec.H >= 8 && spec.W >= 8, "sequence canvas too small");
  check(spec.n >= 1, "sequence needs at least one frame");
  check(spec.objects.size() <= 255, "too many objects for id masks");
  Sequence seq;
  seq.spec = spec;
  const int M = static_cast<int>(spec.objects.size());
  for (int t = 0; t < spec.n; ++t) {
    Tensor frame({spec.H, spec.W, 3});
    Tensor mask({spec.H, spec.W});
    std::vector<Placed> placed;
    placed.reserve(static_cast<size_t>(M));
    for (const auto& o : spec.objects) placed.push_back(place(o, t));
    for (int i = 0; i < spec.H; ++i) {
      for (int j = 0; j < spec.W; ++j) {
        const double x = j + 0.5, y = i + 0.5;
        int top = 0, top_z = -1;
        double lu = 0, lv = 0;
        for (int m = 0; m < M; ++m) {
          const ObjectSpec& o = spec.objects[static_cast<size_t>(m)];
          const Placed& pl = placed[static_cast<size_t>(m)];
          const double dx = x - pl.cx, dy = y - pl.cy;
          const double u = dx * pl.cs + dy * pl.sn;
          const double v = -dx * pl.sn + dy * pl.cs;
          if (o.z > top_z && inside_local(o, u, v)) {
            top = m + 1;
            top_z = o.z;
            lu = u;
            lv = v;
          }
        }
        double col[3];
        if (top == 0) {
          texture_color(spec.bg_texture, spec.bg_c0, spec.bg_c1, spec.bg_noise_seed,
                        x - spec.W * 0.5, y - spec.H * 0.5, spec.W * 0.5, col);
        } else {
          const ObjectSpec& o = spec.objects[static_cast<size_t>(top - 1)];
          const Placed& pl = placed[static_cast<size_t>(top - 1)];
          texture_color(o.texture, pl.c0, pl.c1, o.noise_seed, lu, lv, o.size, col);
        }
        mask.at(i, j) = top;
        for (int c = 0; c < 3; ++c) frame.at(i, j, c) = col[c];
      }
    }
    seq.frames.push_back(std::move(frame));
    seq.masks.push_back(std::move(mask));
  }
  return seq;
}

namespace {

void sample_colors(Rng& rng, double* c0, double* c1) {
  for (int c = 0; c < 3; ++c) {
    c0[c] = rng.uniform(0.05, 0.95);
    c1[c] = rng.uniform(0.05, 0.95);
  }
}

double mean_color_dist(const double* a0, const double* a1, const double* b0,
                       const double* b1) {
  double d = 0;
  for (int c = 0; c < 3; ++c)
    d += std::abs(0.5 * (a0[c] + a1[c]) - 0.5 * (b0[c] + b1[c]));
  return d;
}

SequenceSpec sample_spec(const GenParams& p, uint64_t seed) {
  Rng rng(seed);
  SequenceSpec s;
  s.H = p.H;
  s.W = p.W;
  s.n = p.n;
  s.seed = seed;
  s.bg_texture = static_cast<int>(rng.uniform_int(0, 2));
  sample_colors(rng, s.bg_c0, s.bg_c1);
  s.bg_noise_seed = rng.next_u64();

  const int M = static_cast<int>(rng.uniform_int(p.min_objects, p.max_objects));
  check(!p.classes.empty(), "generator has no shape classes to draw from");
  std::vector<int> zorder(static_cast<size_t>(M));
  for (int m = 0; m < M; ++m) zorder[static_cast<size_t>(m)] = m;
  rng.shuffle(zorder);

  for (int m = 0; m < M; ++m) {
    ObjectSpec o;
    o.cls = p.classes[static_cast<size_t>(
        rng.uniform_int(0, static_cast<int64_t>(p.classes.size()) - 1))];
    o.size = rng.uniform(p.min_size, p.max_size);
    o.aspect = rng.uniform(0.55, 1.0);
    o.cx = rng.uniform(0.22 * p.W, 0.78 * p.W);
    o.cy = rng.uniform(0.22 * p.H, 0.78 * p.H);
    const double speed = rng.uniform(0.3, 1.8);
    const double dir = rng.uniform(0.0, 2.0 * std::numbers::pi);
    o.vx = speed * std::cos(dir);
    o.vy = speed * std::sin(dir);
    o.rot = rng.uniform(0.0, 2.0 * std::numbers::pi);
    o.rot_rate = rng.uniform(-0.15, 0.15);
    o.z = zorder[static_cast<size_t>(m)];
    o.texture = static_cast<int>(rng.uniform_int(0, 2));
    // Keep the object's mean color away from the background's so nothing is
    // invisible by construction.
    do {
      sample_colors(rng, o.c0, o.c1);
    } while (mean_color_dist(o.c0, o.c1, s.bg_c0, s.bg_c1) < 0.35);
    o.noise_seed = rng.next_u64();
    s.objects.push_back(o);
  }

  if (M >= 2 && rng.bernoulli(p.distractor_prob)) {
    s.objects[1].cls = s.objects[0].cls;  // same-class distractor pair
  }
  if (M >= 2 && p.n >= 4 && rng.bernoulli(p.occlusion_prob)) {
    // Steer object b through object a's position mid-sequence, so one of
    // them is briefly fully covered.
    const int a = 0, b = 1;
    const double tmid = 0.5 * (p.n - 1);
    s.objects[b].vx = (s.objects[a].cx + s.objects[a].vx * tmid - s.objects[b].cx) / tmid;
    s.objects[b].vy = (s.objects[a].cy + s.objects[a].vy * tmid - s.objects[b].cy) / tmid;
  }
  return s;
}

bool frame0_visible(const Sequence& seq) {
  const int M = static_cast<int>(seq.spec.objects.size());
  const Tensor& m0 = seq.masks[0];
  for (int m = 1; m <= M; ++m) {
    int64_t full = 0;
    for (int64_t i = 0; i < m0.numel(); ++i)
      if (m0[i] == m) ++full;
    if (full < 20) return false;
    // Feature-grid visibility: the stride-4 nearest sampling must hit it.
    int64_t coarse = 0;
    for (int i = 2; i < seq.spec.H; i += 4)
      for (int j = 2; j < seq.spec.W; j += 4)
        if (m0.at(i, j) == m) ++coarse;
    if (coarse < 1) return false;
  }
  return true;
}

}  // namespace

Sequence generate(const GenParams& p, uint64_t seed) {
  for (int attempt = 0; attempt < 200; ++attempt) {
    Sequence seq = render(sample_spec(p, derive_seed(seed, static_cast<uint64_t>(attempt))));
    if (frame0_visible(seq)) return seq;
  }
  fail("generate: could not place visible objects after 200 attempts (seed ", seed, ")");
}

DatasetParams parse_dataset_params(const std::string& path) {
  using kv::parse_int;
  using kv::parse_real;
  DatasetParams p;
  for (const auto& kv : kv::parse_file(path)) {
    if (kv.key == "height") p.height = static_cast<int>(parse_int(path, kv, 16, 512));
    else if (kv.key == "width") p.width = static_cast<int>(parse_int(path, kv, 16, 512));
    else if (kv.key == "train_sequences")
      p.train_sequences = static_cast<int>(parse_int(path, kv, 1, 100000));
    else if (kv.key == "val_sequences")
      p.val_sequences = static_cast<int>(parse_int(path, kv, 1, 100000));
    else if (kv.key == "train_frames")
      p.train_frames = static_cast<int>(parse_int(path, kv, 2, 1000));
    else if (kv.key == "val_frames")
      p.val_frames = static_cast<int>(parse_int(path, kv, 2, 1000));
    else if (kv.key == "min_objects")
      p.min_objects = static_cast<int>(parse_int(path, kv, 1, 8));
    else if (kv.key == "max_objects")
      p.max_objects = static_cast<int>(parse_int(path, kv, 1, 8));
    else if (kv.key == "min_size") p.min_size = parse_real(path, kv, 4.0, 64.0);
    else if (kv.key == "max_size") p.max_size = parse_real(path, kv, 4.0, 64.0);
    else if (kv.key == "occlusion_prob") p.occlusion_prob = parse_real(path, kv, 0, 1);
    else if (kv.key == "distractor_prob") p.distractor_prob = parse_real(path, kv, 0, 1);
    else if (kv.key == "seed")
      p.seed = kv::parse_u64(path, kv);
    else
      throw config_error(path + ":" + std::to_string(kv.line) + ": unknown key '" +
                         kv.key + "'");
  }
  check(p.height % 4 == 0 && p.width % 4 == 0,
        "dataset height and width must be divisible by 4");
  check(p.min_objects <= p.max_objects, "min_objects exceeds max_objects");
  check(p.min_size <= p.max_size, "min_size exceeds max_size");
  return p;
}

namespace {

std::string seq_dir_name(int i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "seq_%04d", i);
  return buf;
}

std::string frame_name(const char* prefix, int t, const char* ext) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s_%04d.%s", prefix, t, ext);
  return buf;
}

std::string join_classes(const std::vector<ShapeClass>& cs) {
  std::string out;
  for (size_t i = 0; i < cs.size(); ++i) {
    if (i) out += ",";
    out += class_name(cs[i]);
  }
  return out;
}

void write_sequence(const std::string& dir, const Sequence& seq) {
  fs::create_directories(dir);
  for (size_t t = 0; t < seq.frames.size(); ++t) {
    write_gten_file(dir + "/" + frame_name("frame", static_cast<int>(t), "gten"),
                    seq.frames[t], Dtype::f32);
    write_pgm(dir + "/" + frame_name("mask", static_cast<int>(t), "pgm"), seq.masks[t]);
  }
  std::ofstream mf(dir + "/manifest.txt");
  check(mf.good(), "cannot write ", dir, "/manifest.txt");
  std::vector<ShapeClass> cs;
  for (const auto& o : seq.spec.objects) cs.push_back(o.cls);
  mf << "n=" << seq.spec.n << "\n"
     << "M=" << seq.spec.objects.size() << "\n"
     << "classes=" << join_classes(cs) << "\n"
     << "seed=" << seq.spec.seed << "\n";
  mf.flush();
  check(mf.good(), "write failed for ", dir, "/manifest.txt");
}

}  // namespace

void build_dataset(const DatasetParams& p, const std::string& root) {
  fs::create_directories(root);
  GenParams train_gp;
  train_gp.H = p.height;
  train_gp.W = p.width;
  train_gp.n = p.train_frames;
  train_gp.min_objects = p.min_objects;
  train_gp.max_objects = p.max_objects;
  train_gp.min_size = p.min_size;
  train_gp.max_size = p.max_size;
  train_gp.occlusion_prob = p.occlusion_prob;
  train_gp.distractor_prob = p.distractor_prob;
  train_gp.classes = seen_classes();

  GenParams val_gp = train_gp;
  val_gp.n = p.val_frames;
  val_gp.classes = seen_classes();
  for (ShapeClass c : unseen_classes()) val_gp.classes.push_back(c);

  for (int i = 0; i < p.train_sequences; ++i) {
    Sequence seq = generate(train_gp, derive_seed(p.seed, static_cast<uint64_t>(i)));
    write_sequence(root + "/train/" + seq_dir_name(i), seq);
  }
  const auto& unseen = unseen_classes();
  for (int i = 0; i < p.val_sequences; ++i) {
    const uint64_t seed = derive_seed(p.seed, 1000000u + static_cast<uint64_t>(i));
    Sequence seq;
    if (i < static_cast<int>(unseen.size())) {
      // Pin one sequence per held-out class so both always appear in val.
      GenParams gp = val_gp;
      gp.classes = {unseen[static_cast<size_t>(i)]};
      gp.distractor_prob = 1.0;
      seq = generate(gp, seed);
    } else {
      seq = generate(val_gp, seed);
    }
    write_sequence(root + "/val/" + seq_dir_name(i), seq);
  }

  std::ofstream ds(root + "/dataset.txt");
  check(ds.good(), "cannot write ", root, "/dataset.txt");
  ds << "height=" << p.height << "\n"
     << "width=" << p.width << "\n"
     << "train_sequences=" << p.train_sequences << "\n"
     << "val_sequences=" << p.val_sequences << "\n"
     << "train_frames=" << p.train_frames << "\n"
     << "val_frames=" << p.val_frames << "\n"
     << "seen_classes=" << join_classes(seen_classes()) << "\n"
     << "unseen_classes=" << join_classes(unseen_classes()) << "\n"
     << "seed=" << p.seed << "\n";
  ds.flush();
  check(ds.good(), "write failed for ", root, "/dataset.txt");
}

DatasetMeta read_dataset_meta(const std::string& root) {
  const std::string path = root + "/dataset.txt";
  DatasetMeta m;
  auto split_names = [](const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ','))
      if (!item.empty()) out.push_back(item);
    return out;
  };
  using kv::parse_int;
  for (const auto& kv : kv::parse_file(path)) {
    if (kv.key == "height") m.height = static_cast<int>(parse_int(path, kv, 1, 1 << 16));
    else if (kv.key == "width") m.width = static_cast<int>(parse_int(path, kv, 1, 1 << 16));
    else if (kv.key == "train_sequences")
      m.train_sequences = static_cast<int>(parse_int(path, kv, 0, INT32_MAX));
    else if (kv.key == "val_sequences")
      m.val_sequences = static_cast<int>(parse_int(path, kv, 0, INT32_MAX));
    else if (kv.key == "train_frames")
      m.train_frames = static_cast<int>(parse_int(path, kv, 1, INT32_MAX));
    else if (kv.key == "val_frames")
      m.val_frames = static_cast<int>(parse_int(path, kv, 1, INT32_MAX));
    else if (kv.key == "seen_classes") m.seen = split_names(kv.value);
    else if (kv.key == "unseen_classes") m.unseen = split_names(kv.value);
    else if (kv.key == "seed")
      m.seed = kv::parse_u64(path, kv);
    else
      throw config_error(path + ":" + std::to_string(kv.line) + ": unknown key '" +
                         kv.key + "'");
  }
  check(m.height > 0 && m.width > 0, path, ": missing height/width");
  check(!m.seen.empty(), path, ": missing seen_classes");
  return m;
}

std::vector<std::string> list_sequences(const std::string& split_dir) {
  check(fs::is_directory(split_dir), "not a directory: ", split_dir);
  std::vector<std::string> ids;
  for (const auto& e : fs::directory_iterator(split_dir))
    if (e.is_directory()) ids.push_back(e.path().filename().string());
  std::sort(ids.begin(), ids.end());
  check(!ids.empty(), "no sequences found under ", split_dir);
  return ids;
}

LoadedSequence load_sequence(const std::string& seq_dir) {
  LoadedSequence out;
  out.id = fs::path(seq_dir).filename().string();
  const std::string mpath = seq_dir + "/manifest.txt";
  int n = -1;
  using kv::parse_int;
  for (const auto& kv : kv::parse_file(mpath)) {
    if (kv.key == "n") n = static_cast<int>(parse_int(mpath, kv, 1, 100000));
    else if (kv.key == "M") out.M = static_cast<int>(parse_int(mpath, kv, 1, 255));
    else if (kv.key == "classes") {
      std::stringstream ss(kv.value);
      std::string item;
      while (std::getline(ss, item, ','))
        if (!item.empty()) out.classes.push_back(item);
    } else if (kv.key == "seed")
      out.seed = kv::parse_u64(mpath, kv);
    else
      throw config_error(mpath + ":" + std::to_string(kv.line) + ": unknown key '" +
                         kv.key + "'");
  }
  check(n >= 1, mpath, ": missing frame count");
  check(static_cast<int>(out.classes.size()) == out.M, mpath, ": expected ", out.M,
        " classes, got ", out.classes.size());
  for (int t = 0; t < n; ++t) {
    Tensor frame = read_gten_file(seq_dir + "/" + frame_name("frame", t, "gten"));
    check(frame.ndim() == 3 && frame.dim(2) == 3, seq_dir, ": frame ", t,
          " must be (H,W,3), got ", frame.shape_str());
    Tensor mask = read_pgm(seq_dir + "/" + frame_name("mask", t, "pgm"));
    check(mask.dim(0) == frame.dim(0) && mask.dim(1) == frame.dim(1), seq_dir,
          ": mask ", t, " grid does not match frame");
    for (int64_t i = 0; i < mask.numel(); ++i)
      check(mask[i] <= out.M, seq_dir, ": mask ", t, " has id ", mask[i],
            " above object count ", out.M);
    out.frames.push_back(std::move(frame));
    out.masks.push_back(std::move(mask));
  }
  return out;
}

}  // namespace gam::vos
