#pragma once

// 2D coordinates for the embedding scatter: either pass-through of
// precomputed coordinates or PCA onto the top two principal axes.

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dodrio/bundle.hpp"
#include "dodrio/layout.hpp"
#include "dodrio/matrix.hpp"

namespace dodrio {

struct SymmetricEigen {
  std::vector<double> values;  // descending
  Matrix vectors;              // column k pairs with values[k]
};

/// Cyclic Jacobi rotations until the off-diagonal Frobenius norm drops below
/// tolerance * (Frobenius norm of the input).
inline SymmetricEigen symmetric_eigen(Matrix a, double tolerance = 1e-10,
                                      std::size_t max_sweeps = 100) {
  require_square(a, "symmetric_eigen");
  const std::size_t n = a.rows();
  Matrix v = Matrix::identity(n);

  double total = 0.0;
  for (double x : a.values()) total += x * x;
  const double limit = tolerance * std::sqrt(total);

  for (std::size_t sweep = 0; sweep < max_sweeps; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off += 2.0 * a(p, q) * a(p, q);
    if (std::sqrt(off) <= limit) break;

    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }

  std::vector<std::size_t> order(n);
  for (std::size_t k = 0; k < n; ++k) order[k] = k;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return a(x, x) > a(y, y); });
  SymmetricEigen out;
  out.values.resize(n);
  out.vectors = Matrix(n, n);
  for (std::size_t k = 0; k < n; ++k) {
    out.values[k] = a(order[k], order[k]);
    for (std::size_t r = 0; r < n; ++r) out.vectors(r, k) = v(r, order[k]);
  }
  return out;
}

struct LinearProjection {
  std::vector<Point> coords;
  std::array<double, 2> explained_variance{0.0, 0.0};  // sample variance per axis
  // Unit principal axes in feature space; empty when that axis carries no
  // variance.
  std::array<std::vector<double>, 2> axes;
};

/// Mean-centers rows and projects them onto the top two principal axes. Each
/// axis is signed so that its largest-magnitude component is positive (lowest
/// index on ties). With fewer rows than columns the eigenproblem is solved on
/// the row Gram matrix instead of the covariance.
inline LinearProjection linear_project(const Matrix& data) {
  const std::size_t n = data.rows();
  const std::size_t d = data.cols();
  LinearProjection out;
  out.coords.assign(n, Point{});
  if (n == 0) return out;

  Matrix centered(n, d);
  for (std::size_t c = 0; c < d; ++c) {
    double mean = 0.0;
    for (std::size_t r = 0; r < n; ++r) mean += data(r, c);
    mean /= static_cast<double>(n);
    for (std::size_t r = 0; r < n; ++r) centered(r, c) = data(r, c) - mean;
  }
  if (n == 1 || d == 0) return out;

  const double denom = static_cast<double>(n - 1);
  std::vector<double> values;
  std::vector<std::vector<double>> axes;  // feature-space unit vectors

  if (d <= n) {
    Matrix cov(d, d);
    for (std::size_t p = 0; p < d; ++p)
      for (std::size_t q = p; q < d; ++q) {
        double s = 0.0;
        for (std::size_t r = 0; r < n; ++r) s += centered(r, p) * centered(r, q);
        cov(p, q) = cov(q, p) = s / denom;
      }
    auto eig = symmetric_eigen(std::move(cov));
    for (std::size_t k = 0; k < std::min<std::size_t>(2, d); ++k) {
      values.push_back(eig.values[k]);
      std::vector<double> axis(d);
      for (std::size_t r = 0; r < d; ++r) axis[r] = eig.vectors(r, k);
      axes.push_back(std::move(axis));
    }
  } else {
    Matrix gram(n, n);
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p; q < n; ++q) {
        double s = 0.0;
        for (std::size_t c = 0; c < d; ++c) s += centered(p, c) * centered(q, c);
        gram(p, q) = gram(q, p) = s;
      }
    auto eig = symmetric_eigen(std::move(gram));
    for (std::size_t k = 0; k < 2; ++k) {
      const double lambda = std::max(eig.values[k], 0.0);
      values.push_back(lambda / denom);
      std::vector<double> axis(d, 0.0);
      if (lambda > 0.0) {
        const double inv = 1.0 / std::sqrt(lambda);
        for (std::size_t c = 0; c < d; ++c) {
          double s = 0.0;
          for (std::size_t r = 0; r < n; ++r) s += centered(r, c) * eig.vectors(r, k);
          axis[c] = s * inv;
        }
      }
      axes.push_back(std::move(axis));
    }
  }

  double trace = 0.0;
  for (std::size_t c = 0; c < d; ++c)
    for (std::size_t r = 0; r < n; ++r) trace += centered(r, c) * centered(r, c);
  trace /= denom;
  const double negligible = 1e-12 * std::max(trace, 1e-300);

  for (std::size_t k = 0; k < axes.size(); ++k) {
    if (!(values[k] > negligible)) continue;  // no variance on this axis: leave zeros
    auto& axis = axes[k];
    std::size_t lead = 0;
    for (std::size_t c = 1; c < d; ++c)
      if (std::abs(axis[c]) > std::abs(axis[lead])) lead = c;
    if (axis[lead] < 0.0)
      for (double& x : axis) x = -x;
    out.explained_variance[k] = values[k];
    for (std::size_t r = 0; r < n; ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < d; ++c) s += centered(r, c) * axis[c];
      (k == 0 ? out.coords[r].x : out.coords[r].y) = s;
    }
    out.axes[k] = std::move(axis);
  }
  return out;
}

enum class ProjectionMethod { BuiltinLinear, Precomputed };

constexpr std::string_view projection_method_name(ProjectionMethod m) {
  return m == ProjectionMethod::Precomputed ? "precomputed" : "builtin-linear";
}

struct ProjectionResult {
  std::vector<std::string> ids;
  std::vector<Point> coords;
  ProjectionMethod method = ProjectionMethod::BuiltinLinear;
  std::optional<std::array<double, 2>> explained_variance;
};

/// Precomputed coordinates win when every instance carries them; otherwise
/// every instance must carry an embedding of one common dimension.
inline ProjectionResult project_instances(const CorpusBundle& bundle) {
  ProjectionResult out;
  std::size_t with_coords = 0, with_embedding = 0;
  for (const auto& inst : bundle.instances) {
    out.ids.push_back(inst.id);
    with_coords += inst.coords.has_value();
    with_embedding += inst.embedding.has_value();
  }
  const std::size_t n = bundle.instances.size();

  if (with_coords == n) {
    out.method = ProjectionMethod::Precomputed;
    for (const auto& inst : bundle.instances) out.coords.push_back({(*inst.coords)[0], (*inst.coords)[1]});
    return out;
  }
  if (with_coords > 0)
    throw Error(ErrorCode::MixedProjectionSources,
                std::to_string(with_coords) + " of " + std::to_string(n) +
                    " instances carry precomputed coords");
  if (with_embedding < n)
    throw Error(ErrorCode::MissingEmbeddings,
                std::to_string(n - with_embedding) + " instances lack an embedding");

  const std::size_t dims = n ? bundle.instances.front().embedding->size() : 0;
  Matrix data(n, std::max<std::size_t>(dims, 2));
  for (std::size_t r = 0; r < n; ++r) {
    const auto& e = *bundle.instances[r].embedding;
    if (e.size() != dims)
      throw Error(ErrorCode::MissingEmbeddings,
                  "instance '" + bundle.instances[r].id + "' embedding has " +
                      std::to_string(e.size()) + " dims, expected " + std::to_string(dims));
    for (std::size_t c = 0; c < dims; ++c) data(r, c) = e[c];
  }
  auto proj = linear_project(data);
  out.method = ProjectionMethod::BuiltinLinear;
  out.coords = std::move(proj.coords);
  out.explained_variance = proj.explained_variance;
  return out;
}

}  // namespace dodrio
