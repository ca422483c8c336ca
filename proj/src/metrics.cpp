// SPDX-License-Identifier: Apache-2.0
#include "gam/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

namespace gam::met {

namespace {
void require_binary_pair(const char* op, const Tensor& a, const Tensor& b) {
  check(a.ndim() == 2 && b.ndim() == 2, op, ": masks must be rank 2");
  check(a.same_shape(b), op, ": mask shapes differ, ", a.shape_str(), " vs ",
        b.shape_str());
  for (int64_t i = 0; i < a.numel(); ++i) {
    check(a[i] == 0.0 || a[i] == 1.0, op, ": first mask not binary at flat index ", i);
    check(b[i] == 0.0 || b[i] == 1.0, op, ": second mask not binary at flat index ", i);
  }
}

std::vector<std::pair<int, int>> boundary_pixels(const Tensor& m) {
  const int H = m.dim(0), W = m.dim(1);
  std::vector<std::pair<int, int>> out;
  for (int i = 0; i < H; ++i) {
    for (int j = 0; j < W; ++j) {
      if (m.at(i, j) != 1.0) continue;
      const bool edge = i == 0 || i == H - 1 || j == 0 || j == W - 1;
      if (edge || m.at(i - 1, j) == 0.0 || m.at(i + 1, j) == 0.0 ||
          m.at(i, j - 1) == 0.0 || m.at(i, j + 1) == 0.0)
        out.push_back({i, j});
    }
  }
  return out;
}

// Membership grid of `pts` dilated by Euclidean radius r.
std::vector<char> dilate(const std::vector<std::pair<int, int>>& pts, int H, int W,
                         int r) {
  std::vector<char> grid(static_cast<size_t>(H) * W, 0);
  for (const auto& [i, j] : pts) {
    for (int di = -r; di <= r; ++di) {
      for (int dj = -r; dj <= r; ++dj) {
        if (di * di + dj * dj > r * r) continue;
        const int a = i + di, b = j + dj;
        if (a >= 0 && a < H && b >= 0 && b < W)
          grid[static_cast<size_t>(a) * W + b] = 1;
      }
    }
  }
  return grid;
}
}  // namespace

double jaccard(const Tensor& pred, const Tensor& gt) {
  require_binary_pair("jaccard", pred, gt);
  int64_t inter = 0, uni = 0;
  for (int64_t i = 0; i < pred.numel(); ++i) {
    const bool p = pred[i] == 1.0, g = gt[i] == 1.0;
    inter += (p && g) ? 1 : 0;
    uni += (p || g) ? 1 : 0;
  }
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

double contour_f(const Tensor& pred, const Tensor& gt, int radius) {
  require_binary_pair("contour_f", pred, gt);
  check(radius >= 0, "contour_f: radius must be nonnegative");
  const int H = pred.dim(0), W = pred.dim(1);
  const auto pb = boundary_pixels(pred);
  const auto gb = boundary_pixels(gt);
  if (pb.empty() && gb.empty()) return 1.0;
  if (pb.empty() || gb.empty()) return 0.0;
  const auto gd = dilate(gb, H, W, radius);
  const auto pd = dilate(pb, H, W, radius);
  int64_t matched_p = 0, matched_g = 0;
  for (const auto& [i, j] : pb)
    if (gd[static_cast<size_t>(i) * W + j]) ++matched_p;
  for (const auto& [i, j] : gb)
    if (pd[static_cast<size_t>(i) * W + j]) ++matched_g;
  const double precision = static_cast<double>(matched_p) / static_cast<double>(pb.size());
  const double recall = static_cast<double>(matched_g) / static_cast<double>(gb.size());
  if (precision + recall == 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

EvalSummary summarize(const std::vector<ObjectScore>& scores) {
  EvalSummary s;
  for (const auto& o : scores) {
    if (o.seen) {
      s.J_seen += o.J;
      s.F_seen += o.F;
      ++s.n_seen;
    } else {
      s.J_unseen += o.J;
      s.F_unseen += o.F;
      ++s.n_unseen;
    }
  }
  if (s.n_seen > 0) {
    s.J_seen /= s.n_seen;
    s.F_seen /= s.n_seen;
  }
  if (s.n_unseen > 0) {
    s.J_unseen /= s.n_unseen;
    s.F_unseen /= s.n_unseen;
  }
  s.G = 0.25 * (s.J_seen + s.J_unseen + s.F_seen + s.F_unseen);
  return s;
}

void write_results_csv(const std::string& path, const std::vector<ObjectScore>& scores,
                       const EvalSummary& summary) {
  std::ofstream os(path);
  check(os.good(), "cannot open ", path, " for writing");
  os << "seq_id,object_id,class,seen,J,F\n";
  char buf[64];
  for (const auto& o : scores) {
    std::snprintf(buf, sizeof buf, "%.6f,%.6f", o.J, o.F);
    os << o.seq_id << "," << o.object_id << "," << o.cls << "," << (o.seen ? 1 : 0)
       << "," << buf << "\n";
  }
  auto line = [&](const char* name, double v) {
    std::snprintf(buf, sizeof buf, "%.6f", v);
    os << "summary," << name << "," << buf << "\n";
  };
  line("J_seen", summary.J_seen);
  line("J_unseen", summary.J_unseen);
  line("F_seen", summary.F_seen);
  line("F_unseen", summary.F_unseen);
  line("G", summary.G);
  os.flush();
  check(os.good(), "write failed for ", path);
}

}  // namespace gam::met
