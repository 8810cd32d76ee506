#include "plseg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

namespace plseg {

namespace {

template <typename A, typename B>
ConfusionCounts count_pairs(const A& a, const B& b, std::size_t n) {
  ConfusionCounts c;
  for (std::size_t i = 0; i < n; ++i) {
    const bool x = a[i] != 0;
    const bool y = b[i] != 0;
    c.tp += (x && y) ? 1 : 0;
    c.fp += (x && !y) ? 1 : 0;
    c.fn += (!x && y) ? 1 : 0;
  }
  return c;
}

// One pass of the 1D lower-envelope distance transform (Felzenszwalb &
// Huttenlocher) over f[0..n) with sample spacing h: out[q] = min_p f[p] + (h(q-p))^2.
void edt_1d(const double* f, std::ptrdiff_t n, std::ptrdiff_t stride, double h, double* out,
            std::vector<std::ptrdiff_t>& v, std::vector<double>& z, std::vector<double>& tmp) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  const double h2 = h * h;
  tmp.resize(static_cast<std::size_t>(n));
  for (std::ptrdiff_t i = 0; i < n; ++i) tmp[i] = f[i * stride];
  v.assign(static_cast<std::size_t>(n), 0);
  z.assign(static_cast<std::size_t>(n) + 1, 0.0);

  std::ptrdiff_t k = -1;
  for (std::ptrdiff_t q = 0; q < n; ++q) {
    if (tmp[q] == inf) continue;
    if (k < 0) {
      k = 0;
      v[0] = q;
      z[0] = -inf;
      z[1] = inf;
      continue;
    }
    double s = 0.0;
    while (true) {
      const std::ptrdiff_t p = v[k];
      s = ((tmp[q] + h2 * static_cast<double>(q * q)) - (tmp[p] + h2 * static_cast<double>(p * p))) /
          (2.0 * h2 * static_cast<double>(q - p));
      if (s > z[k]) break;  // z[0] = -inf, so this always stops at k = 0
      --k;
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = inf;
  }
  if (k < 0) {
    for (std::ptrdiff_t q = 0; q < n; ++q) out[q * stride] = inf;
    return;
  }
  std::ptrdiff_t j = 0;
  for (std::ptrdiff_t q = 0; q < n; ++q) {
    while (z[j + 1] < static_cast<double>(q)) ++j;
    const double d = h * static_cast<double>(q - v[j]);
    out[q * stride] = d * d + tmp[v[j]];
  }
}

}  // namespace

ConfusionCounts confusion(const Mask2& a, const Mask2& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw ShapeMismatch("confusion: mask shapes differ");
  return count_pairs(a.data(), b.data(), static_cast<std::size_t>(a.size()));
}

ConfusionCounts confusion(const MaskVolume& a, const MaskVolume& b) {
  if (a.shape() != b.shape()) throw ShapeMismatch("confusion: volume shapes differ");
  return count_pairs(a.data().data(), b.data().data(), a.size());
}

double dsc(const ConfusionCounts& c) {
  const std::int64_t den = 2 * c.tp + c.fn + c.fp;
  if (den == 0) return 1.0;
  return static_cast<double>(2 * c.tp) / static_cast<double>(den);
}

double vs(const ConfusionCounts& c) {
  const std::int64_t den = 2 * c.tp + c.fn + c.fp;
  if (den == 0) return 1.0;
  return 1.0 - static_cast<double>(std::abs(c.fn - c.fp)) / static_cast<double>(den);
}

Volume<double> squared_distance_to_foreground(const MaskVolume& mask, const Spacing3& spacing) {
  if (!spacing.valid()) throw InvalidArgument("distance transform: spacing must be positive");
  const std::ptrdiff_t ns = mask.slices(), nr = mask.rows(), nc = mask.cols();
  Volume<double> d(ns, nr, nc, std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask.data()[i]) d.data()[i] = 0.0;
  }
  std::vector<std::ptrdiff_t> v;
  std::vector<double> z, tmp, line;
  double* base = d.data().data();
  // Columns (x), rows (y), slices (z); each pass is in place through a line buffer.
  for (std::ptrdiff_t k = 0; k < ns; ++k) {
    for (std::ptrdiff_t i = 0; i < nr; ++i) {
      double* p = base + (k * nr + i) * nc;
      line.assign(p, p + nc);
      edt_1d(line.data(), nc, 1, spacing.dx, p, v, z, tmp);
    }
  }
  for (std::ptrdiff_t k = 0; k < ns; ++k) {
    for (std::ptrdiff_t j = 0; j < nc; ++j) {
      double* p = base + k * nr * nc + j;
      edt_1d(p, nr, nc, spacing.dy, p, v, z, tmp);
    }
  }
  for (std::ptrdiff_t i = 0; i < nr; ++i) {
    for (std::ptrdiff_t j = 0; j < nc; ++j) {
      double* p = base + i * nc + j;
      edt_1d(p, ns, nr * nc, spacing.dz, p, v, z, tmp);
    }
  }
  return d;
}

namespace {

double directed_sq(const MaskVolume& from, const Volume<double>& dist_to) {
  double worst = 0.0;
  for (std::size_t i = 0; i < from.size(); ++i) {
    if (from.data()[i]) worst = std::max(worst, dist_to.data()[i]);
  }
  return worst;
}

}  // namespace

double hausdorff_mm(const MaskVolume& a, const MaskVolume& b, const Spacing3& spacing) {
  if (a.shape() != b.shape()) throw ShapeMismatch("hausdorff: volume shapes differ");
  if (count_foreground(a) == 0 || count_foreground(b) == 0) {
    throw InvalidArgument("hausdorff: undefined for an empty mask");
  }
  const double ab = directed_sq(a, squared_distance_to_foreground(b, spacing));
  const double ba = directed_sq(b, squared_distance_to_foreground(a, spacing));
  return std::sqrt(std::max(ab, ba));
}

EvalRow evaluate(const std::string& lesion_id, const MaskVolume& pred, const MaskVolume& gt,
                 const Spacing3& spacing) {
  const ConfusionCounts c = confusion(pred, gt);
  EvalRow row{lesion_id, dsc(c), vs(c), std::nullopt};
  if (count_foreground(pred) > 0 && count_foreground(gt) > 0) row.hd_mm = hausdorff_mm(pred, gt, spacing);
  return row;
}

Summary summarize(const std::vector<double>& values) {
  Summary s;
  s.n = values.size();
  if (s.n == 0) return s;
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(s.n);
  if (s.n > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(s.n - 1));
  }
  return s;
}

EvalReport aggregate(std::vector<EvalRow> rows) {
  EvalReport r;
  std::vector<double> d, v, h;
  for (const auto& row : rows) {
    d.push_back(row.dsc);
    v.push_back(row.vs);
    if (row.hd_mm) h.push_back(*row.hd_mm);
  }
  r.dsc = summarize(d);
  r.vs = summarize(v);
  r.hd_mm = summarize(h);
  r.rows = std::move(rows);
  return r;
}

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

void write_eval_csv(const std::filesystem::path& path, const EvalReport& report) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "lesion_id,dsc,vs,hd_mm\n";
  for (const auto& row : report.rows) {
    out << row.lesion_id << ',' << format_number(row.dsc) << ',' << format_number(row.vs) << ','
        << (row.hd_mm ? format_number(*row.hd_mm) : std::string()) << '\n';
  }
  out << "mean," << format_number(report.dsc.mean) << ',' << format_number(report.vs.mean) << ','
      << (report.hd_mm.n ? format_number(report.hd_mm.mean) : std::string()) << '\n';
  out << "std," << format_number(report.dsc.std) << ',' << format_number(report.vs.std) << ','
      << (report.hd_mm.n ? format_number(report.hd_mm.std) : std::string()) << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace plseg
