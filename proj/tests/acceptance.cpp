// End-to-end acceptance run. Prints one [PASS]/[FAIL] line per criterion
// and exits non-zero if any criterion fails.

#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>

#include <json.hpp>

#include "cli.hpp"
#include "oracle/reference.hpp"
#include "support.hpp"

using namespace monosoup;
using testing_support::perturbed;
using testing_support::random_checkpoint;
using testing_support::random_matrix;
using testing_support::TempDir;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Verdict {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok && pass) detail << "first failure: " << what << "; ";
    pass = pass && ok;
  }
};

oracle::Dense to_dense(const Matrix& m) {
  return {static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols()), to_row_major(m)};
}

// Distance in units in the last place between two stored elements.
std::int64_t ulp_distance(DType t, const std::byte* a, const std::byte* b) {
  auto ordered = [](std::int64_t bits, int width) {
    const std::int64_t sign = std::int64_t{1} << (width - 1);
    return (bits & sign) ? -(bits & (sign - 1)) : bits;
  };
  switch (t) {
    case DType::F16:
    case DType::BF16: {
      std::uint16_t x, y;
      std::memcpy(&x, a, 2);
      std::memcpy(&y, b, 2);
      return std::abs(ordered(x, 16) - ordered(y, 16));
    }
    case DType::F32: {
      std::uint32_t x, y;
      std::memcpy(&x, a, 4);
      std::memcpy(&y, b, 4);
      return std::abs(ordered(x, 32) - ordered(y, 32));
    }
    case DType::F64: {
      std::uint64_t x, y;
      std::memcpy(&x, a, 8);
      std::memcpy(&y, b, 8);
      if (x == y) return 0;
      const auto ox = static_cast<std::int64_t>(x & 0x7fffffffffffffffULL) * ((x >> 63) ? -1 : 1);
      const auto oy = static_cast<std::int64_t>(y & 0x7fffffffffffffffULL) * ((y >> 63) ? -1 : 1);
      return std::abs(ox - oy);
    }
  }
  return std::numeric_limits<std::int64_t>::max();
}

std::int64_t max_ulp(const Checkpoint& a, const Checkpoint& b) {
  if (schema_of(a) != schema_of(b)) return std::numeric_limits<std::int64_t>::max();
  std::int64_t worst = 0;
  for (const auto& [name, ta] : a.tensors) {
    const auto& tb = b.tensors.at(name);
    const auto size = element_size(ta.dtype());
    for (std::size_t i = 0; i < ta.bytes().size(); i += size) {
      worst = std::max(worst, ulp_distance(ta.dtype(), ta.bytes().data() + i, tb.bytes().data() + i));
    }
  }
  return worst;
}

// ---------------------------------------------------------------------------

Verdict ac1_svd() {
  Verdict v;
  std::mt19937_64 rng(20240601);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  double svd_seconds = 0.0, worst_recon = 0.0, worst_ortho = 0.0, worst_sigma = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    Eigen::Index m, n;
    if (trial < 2) {
      m = n = 512;
    } else {
      m = static_cast<Eigen::Index>(std::exp(std::log(2.0) + unit(rng) * std::log(256.0)));
      n = static_cast<Eigen::Index>(std::exp(std::log(2.0) + unit(rng) * std::log(256.0)));
    }
    const auto r = std::min(m, n);
    const double cond = std::exp(unit(rng) * std::log(1e6));
    std::vector<double> s(static_cast<std::size_t>(r));
    for (Eigen::Index i = 0; i < r; ++i) {
      s[static_cast<std::size_t>(i)] = r == 1 ? 1.0 : std::pow(cond, -static_cast<double>(i) / static_cast<double>(r - 1));
    }
    const Matrix w = testing_support::with_singular_values(rng, m, n, s) * (0.1 + 10 * unit(rng));

    const auto t0 = Clock::now();
    const auto svd = thin_svd(w);
    svd_seconds += seconds_since(t0);

    const Matrix recon = svd.U * svd.S.asDiagonal() * svd.V.transpose();
    const double recon_err = (recon - w).norm() / std::max(1.0, w.norm());
    const double ortho = std::max((svd.U.transpose() * svd.U - Matrix::Identity(r, r)).cwiseAbs().maxCoeff(),
                                  (svd.V.transpose() * svd.V - Matrix::Identity(r, r)).cwiseAbs().maxCoeff());
    const auto oracle_s = oracle::gram_singular_values(to_dense(w));
    double sigma_err = 0.0;
    for (Eigen::Index i = 0; i < r; ++i) {
      sigma_err = std::max(sigma_err, std::abs(svd.S(i) - oracle_s[static_cast<std::size_t>(i)]) / svd.S(0));
    }
    worst_recon = std::max(worst_recon, recon_err);
    worst_ortho = std::max(worst_ortho, ortho);
    worst_sigma = std::max(worst_sigma, sigma_err);
  }
  v.require(worst_recon <= 1e-9, "reconstruction");
  v.require(worst_ortho <= 1e-10, "orthonormality");
  v.require(worst_sigma <= 1e-8, "singular values vs Gram oracle");
  v.require(svd_seconds <= 60.0, "runtime");
  v.detail << "200 matrices up to 512x512, cond up to 1e6; max recon " << worst_recon << ", max ortho " << worst_ortho
           << ", max |sigma - oracle|/sigma_1 " << worst_sigma << ", SVD time " << svd_seconds << " s";
  return v;
}

Verdict ac2_bounds() {
  Verdict v;
  const auto t0 = Clock::now();
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::size_t checks = 0, violations = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto len = static_cast<std::size_t>(1 + rng() % 300);
    std::vector<double> s(len);
    switch (trial % 4) {
      case 0:
        for (auto& x : s) x = unit(rng);
        break;
      case 1:
        for (std::size_t i = 0; i < len; ++i) s[i] = std::exp(-0.05 * static_cast<double>(i) * (1 + 10 * unit(rng)));
        break;
      case 2:
        for (std::size_t i = 0; i < len; ++i) s[i] = std::pow(static_cast<double>(i + 1), -(0.2 + 2 * unit(rng)));
        break;
      default:
        for (std::size_t i = 0; i < len; ++i) s[i] = 1.0 + static_cast<double>((len - i) / 10);
        break;
    }
    std::sort(s.rbegin(), s.rend());
    if (s.front() <= 0) s.front() = 1.0;
    ThinSVD svd;
    svd.S = Eigen::Map<const Vector>(s.data(), static_cast<Eigen::Index>(len));
    svd.U = Matrix::Identity(static_cast<Eigen::Index>(len), static_cast<Eigen::Index>(len));
    svd.V = svd.U;
    for (double r : {0.5, 0.7, 0.8, 0.9, 0.95}) {
      const int k = energy_rank(s, r);
      const auto split = split_spectrum(svd, k);
      ++checks;
      bool ok = split.cos2_alpha <= 1.0 - r;
      if (k > 1) {
        const double sk = s[static_cast<std::size_t>(k - 1)];
        ok = ok && split.cos2_alpha > 1.0 - r - sk * sk / split.energy_total;
      }
      if (!ok) ++violations;
    }
  }
  const double secs = seconds_since(t0);
  v.require(violations == 0, "bound violated");
  v.require(secs <= 5.0, "runtime");
  v.detail << checks << " (spectrum, R) checks, " << violations << " violations, " << secs << " s";
  return v;
}

Verdict ac3_coefficients() {
  Verdict v;
  auto f = [](double rho, double c) { return mixing_coefficients(rho, c).low; };
  std::size_t boundary_failures = 0;
  for (int i = 0; i <= 100; ++i) {
    const double x = i / 100.0;
    if (f(0.0, 0.0) != 0.0) ++boundary_failures;
    if (f(1.0, x) != 1.0 || f(x, 1.0) != 1.0) ++boundary_failures;
    if (f(x, 0.0) != x) ++boundary_failures;
    if (f(0.0, x) != x) ++boundary_failures;
  }
  v.require(boundary_failures == 0, "boundary conditions");

  double worst_partial = 0.0;
  std::size_t lipschitz_failures = 0;
  const double fd = 1e-5;
  for (int i = 0; i <= 100; ++i) {
    for (int j = 0; j <= 100; ++j) {
      const double rho = i / 100.0, c = j / 100.0;
      const double r_lo = std::max(0.0, rho - fd), r_hi = std::min(1.0, rho + fd);
      const double c_lo = std::max(0.0, c - fd), c_hi = std::min(1.0, c + fd);
      const double d_rho = (f(r_hi, c) - f(r_lo, c)) / (r_hi - r_lo);
      const double d_c = (f(rho, c_hi) - f(rho, c_lo)) / (c_hi - c_lo);
      worst_partial = std::max({worst_partial, std::abs(d_rho - (1.0 - c)), std::abs(d_c - (1.0 - rho))});
      for (double h : {1e-3, 1e-1}) {
        // The step actually taken in floating point.
        if (rho + h <= 1.0) {
          const double step = (rho + h) - rho;
          if (std::abs(f(rho + h, c) - f(rho, c)) > step + 0x1p-52) ++lipschitz_failures;
        }
        if (c + h <= 1.0) {
          const double step = (c + h) - c;
          if (std::abs(f(rho, c + h) - f(rho, c)) > step + 0x1p-52) ++lipschitz_failures;
        }
      }
    }
  }
  v.require(worst_partial <= 1e-6, "finite-difference partials");
  v.require(lipschitz_failures == 0, "1-Lipschitz");
  v.detail << "boundary failures " << boundary_failures << ", max partial error " << worst_partial
           << " on 101x101 grid, Lipschitz failures " << lipschitz_failures;
  return v;
}

Verdict ac4_rank_one() {
  Verdict v;
  std::mt19937_64 rng(404);
  double worst = 0.0;
  int not_k1 = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const Eigen::Index m = 2 + static_cast<Eigen::Index>(rng() % 120), n = 2 + static_cast<Eigen::Index>(rng() % 120);
    const Matrix w0 = random_matrix(rng, m, n);
    const double scale = std::exp(std::uniform_real_distribution<double>(-8, 2)(rng));
    const Matrix wft = w0 + scale * random_matrix(rng, m, 1) * random_matrix(rng, 1, n);
    const auto e = edit_layer(w0, wft, RankRule::effective());
    if (e.report.k != 1) ++not_k1;
    worst = std::max(worst, (e.edited - wft).norm() / wft.norm());
  }
  v.require(not_k1 == 0, "k != 1");
  v.require(worst <= 1e-9, "layer changed");
  v.detail << "50 rank-1 deltas; max relative Frobenius error " << worst << ", layers with k != 1: " << not_k1;
  return v;
}

Verdict ac5_endpoints() {
  Verdict v;
  std::int64_t worst = 0;
  for (DType dt : {DType::F16, DType::BF16, DType::F32, DType::F64}) {
    const auto pre = random_checkpoint(50, dt);
    const auto ft = perturbed(pre, 51);
    const auto ft2 = perturbed(pre, 52);
    const std::int64_t wise0 = max_ulp(wise_ft(pre, ft, 0.0), pre);
    const std::int64_t wise1 = max_ulp(wise_ft(pre, ft, 1.0), ft);
    const std::int64_t stock = max_ulp(model_stock(pre, ft, ft).merged, ft);
    worst = std::max({worst, wise0, wise1, stock});
    v.require(wise0 <= 1 && wise1 <= 1, std::string("wise_ft endpoints ") + std::string(dtype_name(dt)));
    v.require(stock <= 1, std::string("model_stock identical inputs ") + std::string(dtype_name(dt)));

    const Candidate a{"a", ft}, b{"b", ft}, c{"c", ft};
    const std::int64_t uniform = max_ulp(uniform_soup({&a, &b, &c}), ft);
    worst = std::max(worst, uniform);
    v.require(uniform <= 1, "uniform_soup idempotent");

    CandidatePool pool;
    pool.pre = pre;
    pool.candidates = {{"x", ft}, {"y", ft2}, {"z", perturbed(pre, 53)}};
    pool.ranking = std::map<std::string, double>{{"x", 0.1}, {"y", 0.9}, {"z", 0.5}};
    const auto s = sfgs(pool, -1.0);
    auto sel = s.selected;
    std::sort(sel.begin(), sel.end());
    v.require(sel == std::vector<std::string>{"x", "y", "z"}, "sfgs(-1) selects all");
    v.require(s.soup == uniform_soup(pool), "sfgs(-1) equals uniform_soup");
  }
  v.detail << "6-tensor family in F16/BF16/F32/F64; max ulp distance over wise_ft endpoints, identical-input "
           << "model_stock and uniform idempotence " << worst << "; sfgs(-1) == uniform_soup exactly";
  return v;
}

Verdict ac6_oracle() {
  Verdict v;
  const std::vector<std::pair<std::string, Shape>> layout{
      {"blocks.0.attn.weight", {12, 9}}, {"blocks.0.mlp.weight", {16, 9}},
      {"blocks.1.attn.weight", {9, 9}},  {"blocks.1.mlp.weight", {7, 14}}};
  const auto pre = random_checkpoint(60, DType::F64, layout);
  const auto ft = perturbed(pre, 61, 0.2);
  const auto ft2 = perturbed(pre, 62, 0.2);

  const auto edited = edit_checkpoint(pre, ft, {RankRule::fixed_energy(0.8), {}, {}});
  double edit_err = 0.0, lambda_err = 0.0;
  for (const auto& l : edited.report.layers) {
    const auto& t = pre.tensors.at(l.name);
    const auto rows = static_cast<std::size_t>(t.shape()[0]), cols = static_cast<std::size_t>(t.shape()[1]);
    const auto ref = oracle::reference_edit(t.to_f64(), ft.tensors.at(l.name).to_f64(), rows, cols, 0.8);
    v.require(ref.k == l.k, "k differs on " + l.name);
    edit_err = std::max(edit_err, testing_support::max_abs_diff(edited.edited.tensors.at(l.name).to_f64(), ref.edited));
    lambda_err = std::max({lambda_err, std::abs(ref.lambda_low - l.lambda_low), std::abs(ref.lambda_high - l.lambda_high)});
  }
  v.require(edit_err <= 1e-9, "edit per-element");
  v.require(lambda_err <= 1e-9, "edit coefficients");

  const auto stock = model_stock(pre, ft, ft2);
  double stock_err = 0.0;
  for (const auto& [name, t] : pre.tensors) {
    const auto ref = oracle::reference_model_stock(t.to_f64(), ft.tensors.at(name).to_f64(), ft2.tensors.at(name).to_f64());
    stock_err = std::max(stock_err, testing_support::max_abs_diff(stock.merged.tensors.at(name).to_f64(), ref));
  }
  v.require(stock_err <= 1e-9, "model_stock");

  const auto ln = lines(pre, ft, 0.1, 0.9);
  double lines_err = 0.0;
  for (const auto& [name, t] : pre.tensors) {
    const double s = name.starts_with("blocks.0.") ? 0.1 : 0.9;
    const auto a = t.to_f64();
    const auto b = ft.tensors.at(name).to_f64();
    const auto got = ln.tensors.at(name).to_f64();
    for (std::size_t i = 0; i < a.size(); ++i) lines_err = std::max(lines_err, std::abs(got[i] - (a[i] + s * (b[i] - a[i]))));
  }
  v.require(lines_err <= 1e-9, "lines");

  auto one = [](std::vector<double> x) {
    Checkpoint c;
    c.tensors.emplace("w", Tensor::from_f64(DType::F64, {static_cast<std::int64_t>(x.size())}, x));
    return c;
  };
  CandidatePool g;
  g.pre = one({0, 0});
  g.candidates = {{"c", one({5, 5})}, {"a", one({1, 0})}, {"b", one({0, 1})}};
  g.ranking = std::map<std::string, double>{{"a", 0.9}, {"b", 0.8}, {"c", 0.7}};
  const auto greedy = greedy_soup(g, scores_table_evaluator({{"a", 0.60}, {"a,b", 0.65}, {"a,b,c", 0.64}}));
  v.require(greedy.selected == std::vector<std::string>{"a", "b"}, "greedy trace");

  CandidatePool sp;
  sp.pre = one({0, 0, 0, 0});
  sp.candidates = {{"A", one({1, 0, 0, 0})}, {"B", one({0.8, 0.6, 0, 0})}, {"C", one({0, 1, 0, 0})},
                   {"D", one({0.6, 0.8, 0, 0})}};
  sp.ranking = std::map<std::string, double>{{"A", 4}, {"B", 3}, {"C", 2}, {"D", 1}};
  const auto s = sfgs(sp, 0.5);
  v.require(s.selected == std::vector<std::string>{"A", "B", "D"}, "sfgs trace");

  v.detail << "4-layer pair at R=0.8: max element error " << edit_err << ", max lambda error " << lambda_err
           << "; model_stock " << stock_err << "; lines " << lines_err << "; greedy {a,b} and sfgs {A,B,D} reproduced";
  return v;
}

Verdict ac7_cka() {
  Verdict v;
  std::mt19937_64 rng(70);
  double oracle_err = 0.0, rot_err = 0.0, sym_err = 0.0, scale_err = 0.0, ident_err = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix x = random_matrix(rng, 50, 8);
    const Matrix y = random_matrix(rng, 50, 5) + x.leftCols(5) * (trial / 10.0);
    const double c = linear_cka(x, y);
    const Matrix q = testing_support::random_orthonormal(rng, 8, 8);
    oracle_err = std::max(oracle_err, std::abs(c - oracle::reference_cka(to_dense(x), to_dense(y))));
    rot_err = std::max({rot_err, std::abs(linear_cka(x * q, y) - c), std::abs(linear_cka(x * q, x) - 1.0)});
    sym_err = std::max(sym_err, std::abs(linear_cka(y, x) - c));
    scale_err = std::max(scale_err, std::abs(linear_cka(3.7 * x, 0.01 * y) - c));
    ident_err = std::max(ident_err, std::abs(linear_cka(x, x) - 1.0));
    v.require(c >= 0.0 && c <= 1.0, "range");
  }
  v.require(ident_err <= 1e-10, "identity");
  v.require(rot_err <= 1e-10, "orthogonal invariance");
  v.require(sym_err <= 1e-12, "symmetry");
  v.require(scale_err <= 1e-10, "scale invariance");
  v.require(oracle_err <= 1e-10, "direct-formula oracle");
  v.detail << "20 seeded pairs; identity " << ident_err << ", rotation " << rot_err << ", symmetry " << sym_err
           << ", scale " << scale_err << ", oracle " << oracle_err;
  return v;
}

Verdict ac8_format() {
  Verdict v;
  TempDir tmp;
  std::mt19937_64 rng(80);
  Checkpoint c;
  c.metadata = {{"format", "pt"}};
  const DType dtypes[] = {DType::F16, DType::BF16, DType::F32, DType::F64};
  while (c.tensors.size() < 1000) {
    const DType dt = dtypes[rng() % 4];
    Shape shape;
    for (std::size_t d = 0, rank = rng() % 4; d < rank; ++d) shape.push_back(static_cast<std::int64_t>(rng() % 6));
    std::vector<std::byte> data(static_cast<std::size_t>(element_count(shape)) * element_size(dt));
    for (auto& b : data) b = static_cast<std::byte>(rng() & 0xff);
    c.tensors.emplace("layer." + std::to_string(rng() % 100000), Tensor(dt, shape, data));
  }
  write_archive(c, tmp / "a.st");
  const auto back = read_archive(tmp / "a.st");
  write_archive(back, tmp / "b.st");
  v.require(back == c, "round trip");
  v.require(detail::read_file(tmp / "a.st") == detail::read_file(tmp / "b.st"), "rewrite bytes");

  const std::filesystem::path dir = MONOSOUP_FIXTURE_DIR;
  const auto fixture = read_archive(dir / "reference.safetensors");
  std::ifstream in(dir / "reference.json");
  const auto expected = nlohmann::json::parse(in);
  bool same = fixture.tensors.size() == expected["tensors"].size();
  for (const auto& [name, e] : expected["tensors"].items()) {
    const auto it = fixture.tensors.find(name);
    same = same && it != fixture.tensors.end() && it->second.shape() == e["shape"].get<Shape>() &&
           dtype_name(it->second.dtype()) == e["dtype"].get<std::string>() &&
           it->second.to_f64() == e["values"].get<std::vector<double>>();
  }
  v.require(same, "independent fixture");
  v.detail << "1000-tensor archive round-trips byte-identically; independent fixture (" << fixture.tensors.size()
           << " tensors, 4 dtypes) loads with identical values";
  return v;
}

Verdict ac9_determinism() {
  Verdict v;
  TempDir tmp;
  std::vector<std::pair<std::string, Shape>> layout;
  for (int i = 0; i < 100; ++i) {
    const std::int64_t rows = 8 + (i * 7) % 57, cols = 6 + (i * 11) % 41;
    if (i % 10 == 9) layout.push_back({"layers." + std::to_string(i) + ".bias", {rows}});
    else layout.push_back({"layers." + std::to_string(i) + ".weight", {rows, cols}});
  }
  const auto pre = random_checkpoint(90, DType::F32, layout);
  write_archive(pre, tmp / "pre.st");
  write_archive(perturbed(pre, 91, 0.05), tmp / "ft.st");
  std::vector<std::vector<std::byte>> outputs, reports;
  for (const char* threads : {"1", "4", "8"}) {
    const auto out = tmp / (std::string("e") + threads + ".st");
    const auto rep = tmp / (std::string("r") + threads + ".json");
    const int code = cli::run({"monosoup", "--threads", threads, "edit", "--pre", (tmp / "pre.st").string(), "--ft",
                               (tmp / "ft.st").string(), "--out", out.string(), "--report", rep.string()});
    v.require(code == 0, std::string("edit with ") + threads + " threads");
    if (code != 0) return v;
    outputs.push_back(detail::read_file(out));
    reports.push_back(detail::read_file(rep));
  }
  v.require(outputs[0] == outputs[1] && outputs[0] == outputs[2], "edited checkpoints differ");
  v.require(reports[0] == reports[1] && reports[0] == reports[2], "reports differ");
  v.detail << "100-layer model edited with 1, 4 and 8 threads; outputs " << outputs[0].size()
           << " bytes each, byte-identical including reports";
  return v;
}

Verdict ac10_scale() {
  Verdict v;
  const auto layout = synthetic::vit_layout(12, 768);
  std::int64_t params = 0;
  for (const auto& [name, shape] : layout) params += element_count(shape);
  const auto pre = synthetic::random_checkpoint(layout, 100);
  const auto ft = synthetic::fine_tune(pre, 101);
  const Parallelism par{0};
  const auto t0 = Clock::now();
  const auto res = edit_checkpoint(pre, ft, {RankRule::effective(), {}, par});
  const double secs = seconds_since(t0);
  const auto totals = res.report.totals();
  v.require(secs <= 300.0, "runtime");
  v.require(totals.at(LayerStatus::Edited) > 0 && totals.at(LayerStatus::DegenerateZeroDelta) == 0, "statuses");
  v.detail << params << " parameters (" << layout.size() << " tensors, " << totals.at(LayerStatus::Edited)
           << " matrices edited) in " << secs << " s on " << par.resolved() << " thread(s), float64 arithmetic";
  return v;
}

}  // namespace

int main(int argc, char** argv) {
  std::string only = argc > 1 ? argv[1] : "";
  const std::vector<std::pair<std::string, std::pair<std::string, std::function<Verdict()>>>> criteria{
      {"AC1", {"SVD correctness", ac1_svd}},
      {"AC2", {"cos^2 alpha bounds from the energy threshold", ac2_bounds}},
      {"AC3", {"mixing coefficient law", ac3_coefficients}},
      {"AC4", {"rank-1 fixed point", ac4_rank_one}},
      {"AC5", {"merge endpoint identities", ac5_endpoints}},
      {"AC6", {"oracle equivalence end-to-end", ac6_oracle}},
      {"AC7", {"linear CKA properties", ac7_cka}},
      {"AC8", {"format fidelity", ac8_format}},
      {"AC9", {"determinism under parallelism", ac9_determinism}},
      {"AC10", {"scale smoke test", ac10_scale}},
  };
  int failed = 0;
  for (const auto& [id, entry] : criteria) {
    if (!only.empty() && only != id) continue;
    Verdict v;
    try {
      v = entry.second();
    } catch (const std::exception& e) {
      v.pass = false;
      v.detail << "exception: " << e.what();
    }
    std::printf("[%s] %s %s: %s\n", v.pass ? "PASS" : "FAIL", id.c_str(), entry.first.c_str(), v.detail.str().c_str());
    std::fflush(stdout);
    if (!v.pass) ++failed;
  }
  return failed == 0 ? 0 : 1;
}
