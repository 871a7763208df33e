#pragma once

// Box-constrained continuous test functions.
//
// Every function is a minimisation problem with a known optimum of 0 at the
// (possibly shifted) origin. Shifted variants evaluate on z = x - o, rotated
// variants on z = R (x - o). Shift vectors and rotation matrices are generated
// deterministically from the function id and dimension unless a transform
// data file overrides them.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <numbers>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include <Eigen/Dense>

#include "dedqn/errors.hpp"
#include "dedqn/rng.hpp"

namespace dedqn {

enum class FunctionClass { unimodal, multimodal, expanded, hybrid };

inline std::string_view to_string(FunctionClass c) {
  switch (c) {
    case FunctionClass::unimodal: return "unimodal";
    case FunctionClass::multimodal: return "multimodal";
    case FunctionClass::expanded: return "expanded";
    case FunctionClass::hybrid: return "hybrid";
  }
  return "unknown";
}

class ObjectiveFunction {
 public:
  using Body = std::function<double(std::span<const double>)>;

  ObjectiveFunction(std::string base_id, std::vector<double> lower, std::vector<double> upper,
                    Body body, std::optional<double> f_optimum = std::nullopt,
                    FunctionClass cls = FunctionClass::unimodal)
      : base_id_(std::move(base_id)),
        lower_(std::move(lower)),
        upper_(std::move(upper)),
        body_(std::move(body)),
        f_optimum_(f_optimum),
        class_(cls) {
    if (lower_.empty() || lower_.size() != upper_.size())
      throw std::invalid_argument("objective '" + base_id_ + "': bounds must be non-empty and of equal length");
    for (std::size_t j = 0; j < lower_.size(); ++j) {
      if (!(lower_[j] <= upper_[j]))
        throw std::invalid_argument("objective '" + base_id_ + "': lower > upper at coordinate " +
                                    std::to_string(j));
    }
    if (!body_) throw std::invalid_argument("objective '" + base_id_ + "': empty body");
  }

  /// Problem id, "<base>-<dim>".
  std::string id() const { return base_id_ + "-" + std::to_string(dim()); }
  const std::string& base_id() const { return base_id_; }
  std::size_t dim() const { return lower_.size(); }
  std::span<const double> lower() const { return lower_; }
  std::span<const double> upper() const { return upper_; }
  std::optional<double> f_optimum() const { return f_optimum_; }
  FunctionClass function_class() const { return class_; }

  /// Length of the box diagonal.
  double diagonal() const {
    double s = 0.0;
    for (std::size_t j = 0; j < dim(); ++j) s += (upper_[j] - lower_[j]) * (upper_[j] - lower_[j]);
    return std::sqrt(s);
  }

  double operator()(std::span<const double> x) const {
    if (x.size() != dim())
      throw std::invalid_argument("objective '" + id() + "': expected " + std::to_string(dim()) +
                                  " coordinates, got " + std::to_string(x.size()));
    return body_(x);
  }

 private:
  std::string base_id_;
  std::vector<double> lower_;
  std::vector<double> upper_;
  Body body_;
  std::optional<double> f_optimum_;
  FunctionClass class_;
};

inline double evaluate(const ObjectiveFunction& f, std::span<const double> x) { return f(x); }

// Kernels on the transformed variable z. All are >= 0 with minimum 0 at z = 0;
// each sum is arranged so that every term is non-negative in floating point.
namespace kernels {

inline double sphere(std::span<const double> z) {
  double s = 0.0;
  for (double v : z) s += v * v;
  return s;
}

inline double schwefel12(std::span<const double> z) {
  double s = 0.0, prefix = 0.0;
  for (double v : z) {
    prefix += v;
    s += prefix * prefix;
  }
  return s;
}

// Shifted by one so the optimum sits at z = 0.
inline double rosenbrock(std::span<const double> z) {
  double s = 0.0;
  for (std::size_t i = 0; i + 1 < z.size(); ++i) {
    const double a = z[i] + 1.0, b = z[i + 1] + 1.0;
    s += 100.0 * (a * a - b) * (a * a - b) + (a - 1.0) * (a - 1.0);
  }
  return s;
}

inline double rastrigin(std::span<const double> z) {
  double s = 0.0;
  for (double v : z) s += v * v + 10.0 * (1.0 - std::cos(2.0 * std::numbers::pi * v));
  return s;
}

inline double ackley(std::span<const double> z) {
  if (z.empty()) return 0.0;
  const double n = static_cast<double>(z.size());
  double sq = 0.0, cs = 0.0;
  for (double v : z) {
    sq += v * v;
    cs += std::cos(2.0 * std::numbers::pi * v);
  }
  const double a = 20.0 * (1.0 - std::exp(-0.2 * std::sqrt(sq / n)));
  const double b = std::numbers::e - std::exp(cs / n);
  return std::max(0.0, a + b);
}

inline double griewank(std::span<const double> z) {
  double s = 0.0, p = 1.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    s += z[i] * z[i];
    p *= std::cos(z[i] / std::sqrt(static_cast<double>(i + 1)));
  }
  return s / 4000.0 + (1.0 - p);
}

// a = 0.5, b = 3, k_max = 20. cos(pi b^k) = -1 for odd b^k, so each term is
// a^k (1 + cos(...)) >= 0.
inline double weierstrass(std::span<const double> z) {
  constexpr int kmax = 20;
  double s = 0.0;
  for (double v : z) {
    double ak = 1.0, bk = 1.0;
    for (int k = 0; k <= kmax; ++k) {
      s += ak * (1.0 + std::cos(2.0 * std::numbers::pi * bk * (v + 0.5)));
      ak *= 0.5;
      bk *= 3.0;
    }
  }
  return s;
}

inline double rosenbrock2(double a, double b) {
  a += 1.0;
  b += 1.0;
  return 100.0 * (a * a - b) * (a * a - b) + (a - 1.0) * (a - 1.0);
}

/// Expanded Griewank-of-Rosenbrock over cyclic coordinate pairs.
inline double griewank_rosenbrock(std::span<const double> z) {
  double s = 0.0;
  const std::size_t n = z.size();
  if (n < 2) return 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double y = rosenbrock2(z[i], z[(i + 1) % n]);
    s += y * y / 4000.0 + (1.0 - std::cos(y));
  }
  return s;
}

/// Expanded Rastrigin-of-Rosenbrock over cyclic coordinate pairs.
inline double rastrigin_rosenbrock(std::span<const double> z) {
  double s = 0.0;
  const std::size_t n = z.size();
  if (n < 2) return 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double y = rosenbrock2(z[i], z[(i + 1) % n]);
    s += y * y + 10.0 * (1.0 - std::cos(2.0 * std::numbers::pi * y));
  }
  return s;
}

using Kernel = double (*)(std::span<const double>);

}  // namespace kernels

/// Shift vector and optional rotation matrix for one problem instance.
struct Transform {
  std::vector<double> shift;
  std::optional<Eigen::MatrixXd> rotation;
};

/// Random orthogonal matrix (QR of a Gaussian matrix, sign-fixed so the
/// result is Haar distributed).
inline Eigen::MatrixXd random_rotation(std::size_t dim, Rng& rng) {
  const auto n = static_cast<Eigen::Index>(dim);
  Eigen::MatrixXd a(n, n);
  for (Eigen::Index r = 0; r < n; ++r)
    for (Eigen::Index c = 0; c < n; ++c) a(r, c) = rng.normal();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(n, n);
  const Eigen::MatrixXd& rr = qr.matrixQR();
  for (Eigen::Index c = 0; c < n; ++c)
    if (rr(c, c) < 0.0) q.col(c) *= -1.0;
  return q;
}

inline double orthogonality_error(const Eigen::MatrixXd& m) {
  const Eigen::MatrixXd e = m * m.transpose() - Eigen::MatrixXd::Identity(m.rows(), m.cols());
  return e.cwiseAbs().maxCoeff();
}

/// Reads a transform data file: first non-blank row is the shift vector
/// (exactly `dim` reals), optionally followed by `dim` rows of `dim` reals
/// forming the rotation matrix.
inline Transform load_transform_data(const std::filesystem::path& path, std::size_t dim,
                                     bool check_orthogonality = false) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open transform file '" + path.string() + "'");
  std::vector<std::vector<double>> rows;
  std::vector<std::size_t> line_numbers;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::vector<double> row;
    std::string tok;
    while (ls >> tok) {
      try {
        std::size_t used = 0;
        double v = std::stod(tok, &used);
        if (used != tok.size()) throw std::invalid_argument(tok);
        row.push_back(v);
      } catch (const std::exception&) {
        throw DataError(path.string() + ":" + std::to_string(line_no) + ": not a real number: '" +
                        tok + "'");
      }
    }
    if (row.empty()) continue;
    if (row.size() != dim)
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": expected " +
                      std::to_string(dim) + " values, found " + std::to_string(row.size()));
    rows.push_back(std::move(row));
    line_numbers.push_back(line_no);
  }
  if (rows.empty()) throw DataError(path.string() + ": no shift vector found");
  if (rows.size() != 1 && rows.size() != dim + 1)
    throw DataError(path.string() + ":" + std::to_string(line_numbers.back()) + ": expected " +
                    std::to_string(dim) + " rotation rows after the shift row, found " +
                    std::to_string(rows.size() - 1));
  Transform t;
  t.shift = std::move(rows.front());
  if (rows.size() == dim + 1) {
    const auto n = static_cast<Eigen::Index>(dim);
    Eigen::MatrixXd m(n, n);
    for (Eigen::Index r = 0; r < n; ++r)
      for (Eigen::Index c = 0; c < n; ++c) m(r, c) = rows[static_cast<std::size_t>(r) + 1][static_cast<std::size_t>(c)];
    if (check_orthogonality && orthogonality_error(m) > 1e-6)
      throw DataError(path.string() + ": rotation matrix is not orthogonal within 1e-6");
    t.rotation = std::move(m);
  }
  return t;
}

/// Registered base function: kernel, box, class, and which transform applies.
struct BaseFunction {
  enum class Variant { plain, shifted, shifted_rotated };

  std::string id;
  FunctionClass cls;
  double lower;
  double upper;
  Variant variant;
  std::function<double(std::span<const double>)> kernel;
  bool default_train;
};

namespace detail {

inline std::function<double(std::span<const double>)> additive(std::vector<kernels::Kernel> parts) {
  return [parts = std::move(parts)](std::span<const double> z) {
    double s = 0.0;
    for (auto k : parts) s += k(z);
    return s;
  };
}

// Contiguous near-equal chunks, one kernel per chunk.
inline std::function<double(std::span<const double>)> partitioned(std::vector<kernels::Kernel> parts) {
  return [parts = std::move(parts)](std::span<const double> z) {
    double s = 0.0;
    const std::size_t n = z.size(), k = parts.size();
    std::size_t begin = 0;
    for (std::size_t p = 0; p < k; ++p) {
      const std::size_t end = (n * (p + 1)) / k;
      s += parts[p](z.subspan(begin, end - begin));
      begin = end;
    }
    return s;
  };
}

}  // namespace detail

/// The registered catalogue: 4 unimodal, 6 multimodal, 2 expanded, 9 hybrid.
/// 16 are flagged for training and 5 for testing; both expanded functions
/// are training-only.
inline const std::vector<BaseFunction>& registry() {
  using V = BaseFunction::Variant;
  using C = FunctionClass;
  namespace k = kernels;
  static const std::vector<BaseFunction> reg = [] {
    std::vector<BaseFunction> r;
    r.push_back({"sphere", C::unimodal, -100, 100, V::shifted, k::sphere, true});
    r.push_back({"schwefel12", C::unimodal, -100, 100, V::shifted, k::schwefel12, true});
    r.push_back({"schwefel12_plain", C::unimodal, -100, 100, V::plain, k::schwefel12, true});
    r.push_back({"rot_schwefel12", C::unimodal, -100, 100, V::shifted_rotated, k::schwefel12, false});

    r.push_back({"rosenbrock", C::multimodal, -100, 100, V::shifted, k::rosenbrock, true});
    r.push_back({"rot_griewank", C::multimodal, -600, 600, V::shifted_rotated, k::griewank, true});
    r.push_back({"rot_ackley", C::multimodal, -32, 32, V::shifted_rotated, k::ackley, true});
    r.push_back({"rot_rastrigin", C::multimodal, -5, 5, V::shifted_rotated, k::rastrigin, true});
    r.push_back({"rot_weierstrass", C::multimodal, -0.5, 0.5, V::shifted_rotated, k::weierstrass, true});
    r.push_back({"rastrigin", C::multimodal, -5, 5, V::shifted, k::rastrigin, false});

    r.push_back({"griewank_rosenbrock", C::expanded, -5, 5, V::shifted, k::griewank_rosenbrock, true});
    r.push_back({"rastrigin_rosenbrock", C::expanded, -5, 5, V::shifted, k::rastrigin_rosenbrock, true});

    r.push_back({"hyb_rastrigin_sphere", C::hybrid, -5, 5, V::shifted,
                 detail::additive({k::rastrigin, k::sphere}), true});
    r.push_back({"hyb_rot_rastrigin_sphere", C::hybrid, -5, 5, V::shifted_rotated,
                 detail::additive({k::rastrigin, k::sphere}), true});
    r.push_back({"hyb_rot_ackley_griewank", C::hybrid, -5, 5, V::shifted_rotated,
                 detail::additive({k::ackley, k::griewank}), true});
    r.push_back({"hyb_part_rastrigin_weierstrass_griewank_sphere", C::hybrid, -5, 5, V::shifted,
                 detail::partitioned({k::rastrigin, k::weierstrass, k::griewank, k::sphere}), true});
    r.push_back({"hyb_part_rot_ackley_rastrigin_sphere", C::hybrid, -5, 5, V::shifted_rotated,
                 detail::partitioned({k::ackley, k::rastrigin, k::sphere}), true});
    r.push_back({"hyb_rot_weierstrass_rastrigin", C::hybrid, -5, 5, V::shifted_rotated,
                 detail::additive({k::weierstrass, k::rastrigin}), true});
    r.push_back({"hyb_rot_rastrigin_weierstrass_griewank", C::hybrid, -5, 5, V::shifted_rotated,
                 detail::additive({k::rastrigin, k::weierstrass, k::griewank}), false});
    r.push_back({"hyb_part_rot_griewank_rastrigin_schwefel12_ackley", C::hybrid, -5, 5, V::shifted_rotated,
                 detail::partitioned({k::griewank, k::rastrigin, k::schwefel12, k::ackley}), false});
    r.push_back({"hyb_rot_rosenbrock_rastrigin_ackley", C::hybrid, -5, 5, V::shifted_rotated,
                 detail::additive({k::rosenbrock, k::rastrigin, k::ackley}), false});
    return r;
  }();
  return reg;
}

inline const BaseFunction& find_base_function(std::string_view id) {
  for (const auto& b : registry())
    if (b.id == id) return b;
  throw ConfigError("unknown function id '" + std::string(id) + "'");
}

inline std::vector<std::string> default_train_functions() {
  std::vector<std::string> out;
  for (const auto& b : registry())
    if (b.default_train) out.push_back(b.id);
  return out;
}

inline std::vector<std::string> default_test_functions() {
  std::vector<std::string> out;
  for (const auto& b : registry())
    if (!b.default_train) out.push_back(b.id);
  return out;
}

/// Deterministic transform for (base, dim): shift uniform in 80% of the box.
inline Transform default_transform(const BaseFunction& base, std::size_t dim) {
  Transform t;
  t.shift.assign(dim, 0.0);
  if (base.variant == BaseFunction::Variant::plain) return t;
  Rng rng(derive_seed(0x5EEDB0C5ULL, "shift", base.id, dim));
  for (auto& o : t.shift) o = 0.8 * rng.uniform(base.lower, base.upper);
  if (base.variant == BaseFunction::Variant::shifted_rotated) {
    Rng rot_rng(derive_seed(0x5EEDB0C5ULL, "rotation", base.id, dim));
    t.rotation = random_rotation(dim, rot_rng);
  }
  return t;
}

/// Builds the problem instance for one base function at one dimension.
inline ObjectiveFunction make_function(const BaseFunction& base, std::size_t dim,
                                       std::optional<Transform> transform = std::nullopt) {
  if (dim == 0) throw ConfigError("function '" + base.id + "': dimension must be positive");
  Transform t = transform ? std::move(*transform) : default_transform(base, dim);
  if (t.shift.size() != dim)
    throw DataError("function '" + base.id + "': shift length " + std::to_string(t.shift.size()) +
                    " does not match dimension " + std::to_string(dim));
  if (t.rotation && (t.rotation->rows() != static_cast<Eigen::Index>(dim) ||
                     t.rotation->cols() != static_cast<Eigen::Index>(dim)))
    throw DataError("function '" + base.id + "': rotation shape does not match dimension");

  auto shift = std::make_shared<const std::vector<double>>(std::move(t.shift));
  std::shared_ptr<const Eigen::MatrixXd> rot;
  if (t.rotation) rot = std::make_shared<const Eigen::MatrixXd>(std::move(*t.rotation));
  auto body = [kernel = base.kernel, shift, rot](std::span<const double> x) {
    const auto n = static_cast<Eigen::Index>(x.size());
    Eigen::VectorXd z(n);
    for (Eigen::Index j = 0; j < n; ++j) z[j] = x[static_cast<std::size_t>(j)] - (*shift)[static_cast<std::size_t>(j)];
    if (rot) z = (*rot) * z;
    return kernel(std::span<const double>(z.data(), static_cast<std::size_t>(n)));
  };
  return ObjectiveFunction(base.id, std::vector<double>(dim, base.lower),
                           std::vector<double>(dim, base.upper), std::move(body), 0.0, base.cls);
}

struct SuiteConfig {
  std::vector<std::string> train_functions = default_train_functions();
  std::vector<std::string> test_functions = default_test_functions();
  std::vector<std::size_t> dims = {10, 30};
  std::optional<std::filesystem::path> transform_dir;

  void validate() const {
    std::unordered_set<std::string> train(train_functions.begin(), train_functions.end());
    for (const auto& id : test_functions)
      if (train.contains(id))
        throw ConfigError("function '" + id + "' is in both the train and test sets");
    for (const auto& id : train_functions) find_base_function(id);
    for (const auto& id : test_functions) find_base_function(id);
    for (auto d : dims)
      if (d == 0) throw ConfigError("dimensions must be positive");
  }
};

/// One problem per (function, dim), functions outermost. Ids are unique.
inline std::vector<ObjectiveFunction> make_suite(
    std::span<const std::string> function_ids, std::span<const std::size_t> dims,
    const std::optional<std::filesystem::path>& transform_dir = std::nullopt) {
  std::vector<ObjectiveFunction> suite;
  std::unordered_set<std::string> seen;
  for (const auto& id : function_ids) {
    const BaseFunction& base = find_base_function(id);
    for (auto d : dims) {
      std::optional<Transform> t;
      if (transform_dir) {
        const auto file = *transform_dir / (id + "-" + std::to_string(d) + ".txt");
        if (std::filesystem::exists(file)) t = load_transform_data(file, d);
      }
      auto f = make_function(base, d, std::move(t));
      if (!seen.insert(f.id()).second) throw ConfigError("duplicate problem id '" + f.id() + "'");
      suite.push_back(std::move(f));
    }
  }
  return suite;
}

inline std::vector<ObjectiveFunction> train_suite(const SuiteConfig& cfg) {
  return make_suite(cfg.train_functions, cfg.dims, cfg.transform_dir);
}

inline std::vector<ObjectiveFunction> test_suite(const SuiteConfig& cfg) {
  return make_suite(cfg.test_functions, cfg.dims, cfg.transform_dir);
}

}  // namespace dedqn
