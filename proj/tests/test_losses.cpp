#include "apvit/losses.hpp"

#include <doctest.h>

#include <random>

#include "apvit/prototype_bank.hpp"
#include "test_util.hpp"

using namespace apvit;

namespace {

struct Fixture {
  ExperimentConfig cfg = testutil::tiny_config();
  Model<double> model;
  std::vector<TensorImage> imgs;
  std::vector<const TensorImage*> ptrs;
  BatchTargets tgt;
  MatD masks;

  Fixture() : model(cfg.model, 11) {
    const int B = 2, A = cfg.model.schema.count();
    for (int b = 0; b < B; ++b)
      imgs.push_back(testutil::random_image(16, 1, 70 + b));
    for (auto& im : imgs) ptrs.push_back(&im);
    tgt.attr_labels = {{2.0, 4.0}, {0.0, 0.0}};
    tgt.attr_idx = {{1, 3}, {0, 2}};
    tgt.target_labels = {1.0, 5.0};
    tgt.target_idx = {0, 4};
    tgt.value_idx_rows.resize(B);
    for (int b = 0; b < B; ++b) {
      tgt.value_idx_rows[b].resize(A);
      for (int a = 0; a < A; ++a) tgt.value_idx_rows[b][a] = tgt.attr_idx[a][b];
    }
    std::mt19937_64 rng(4);
    masks = MatD::Zero(B, 16 * 16);
    for (int b = 0; b < B; ++b)
      for (int i = 0; i < 16 * 16; ++i) masks(b, i) = rng() % 2 ? 1.0 : 0.0;
  }

  LossBreakdown<double> run(BatchGrads<double>* g) const {
    typename Model<double>::Cache c;
    BatchOutput<double> out = model.forward_batch(ptrs, c);
    return supervised_loss(cfg.model, out, tgt, masks, LossWeights{}, g);
  }
};

double select_value(const LossBreakdown<double>& v, const std::string& label) {
  if (label == "target") return v.target;
  if (label == "attr") return v.attr;
  if (label == "seg") return v.seg;
  return v.total(0.0);
}

// Analytic parameter gradients for one term of the breakdown, compared
// against central finite differences at random coordinates.
template <class Select>
void check_term_gradients(const char* label, Select&& select, int coords,
                          double tol) {
  Fixture fx;
  typename Model<double>::Cache c;
  BatchOutput<double> out = fx.model.forward_batch(fx.ptrs, c);
  BatchGrads<double> g;
  supervised_loss(fx.cfg.model, out, fx.tgt, fx.masks, LossWeights{}, &g);

  // Zero every gradient slot except the selected term's.
  const int A = fx.cfg.model.schema.count();
  BatchGrads<double> picked;
  picked.d_attr_scores.resize(A);
  for (int a = 0; a < A; ++a)
    picked.d_attr_scores[a] = MatD::Zero(g.d_attr_scores[a].rows(),
                                         g.d_attr_scores[a].cols());
  picked.d_target_scores =
      MatD::Zero(g.d_target_scores.rows(), g.d_target_scores.cols());
  select(g, picked);

  fx.model.zero_grads();
  fx.model.backward_batch(picked, c);

  std::mt19937_64 rng(1234);
  auto& params = fx.model.parameters();
  int checked = 0;
  double max_rel = 0.0;
  for (int draw = 0; draw < 400 && checked < coords; ++draw) {
    Param<double>* p = params[rng() % params.size()];
    int r = static_cast<int>(rng() % p->w.rows());
    int cidx = static_cast<int>(rng() % p->w.cols());
    double analytic = p->g(r, cidx);
    double h = 1e-5 * std::max(1.0, std::abs(p->w(r, cidx)));
    double fd = testutil::central_diff(
        *p, r, cidx,
        [&]() { return select_value(fx.run(nullptr), label); }, h);
    // Coordinates the term genuinely does not touch agree at zero; they do
    // not count toward the quota.
    if (std::abs(analytic) < 1e-12 && std::abs(fd) < 1e-7) continue;
    double rel = testutil::rel_err(analytic, fd);
    max_rel = std::max(max_rel, rel);
    INFO(label, " param ", p->name, " (", r, ",", cidx, ") analytic ",
         analytic, " fd ", fd);
    CHECK(rel < tol);
    ++checked;
  }
  INFO(label, " max rel err ", max_rel);
  CHECK(checked >= coords);
}

}  // namespace

TEST_CASE("ordinal squared error matches the worked examples") {
  MatD s(1, 1);
  ClassWeights cw;
  s(0, 0) = 3.0;
  CHECK(mse_loss(s, {3.0}, {2}, cw, nullptr) == doctest::Approx(0.0));
  s(0, 0) = 4.0;
  CHECK(mse_loss(s, {2.0}, {1}, cw, nullptr) == doctest::Approx(4.0));
  // Batch of two averages.
  MatD s2(2, 1);
  s2 << 3.0, 4.0;
  CHECK(mse_loss(s2, {3.0, 2.0}, {2, 1}, cw, nullptr) == doctest::Approx(2.0));
}

TEST_CASE("uniform logits give ln K cross-entropy") {
  MatD logits = MatD::Zero(1, 5);
  ClassWeights cw;
  CHECK(cross_entropy_loss(logits, {2}, cw, nullptr) ==
        doctest::Approx(std::log(5.0)).epsilon(1e-12));
  // Shifting all logits by a constant changes nothing.
  MatD shifted = logits.array() + 1000.0;
  CHECK(cross_entropy_loss(shifted, {2}, cw, nullptr) ==
        doctest::Approx(std::log(5.0)).epsilon(1e-9));
}

TEST_CASE("segmentation error matches the worked examples") {
  MatD ones = MatD::Ones(1, 8), zeros = MatD::Zero(1, 8);
  CHECK(seg_mse_loss(ones, ones, nullptr) == doctest::Approx(0.0));
  CHECK(seg_mse_loss(zeros, ones, nullptr) == doctest::Approx(1.0));
  MatD half = MatD::Constant(1, 8, 0.5);
  MatD target(1, 8);
  for (int i = 0; i < 8; ++i) target(0, i) = i < 4 ? 1.0 : 0.0;
  CHECK(seg_mse_loss(half, target, nullptr) == doctest::Approx(0.25));
}

TEST_CASE("attribute term is the mean over attribute heads") {
  // Two ordinal attributes with per-head errors 1.0 and 3.0 average to 2.0.
  ExperimentConfig cfg = testutil::tiny_config();
  cfg.model.schema.attributes = {
      {"p", {true, 1, 5, {}}},
      {"q", {true, 1, 5, {}}},
  };
  cfg.model.decoder_enabled = false;
  BatchOutput<double> out;
  out.attr_scores = {MatD::Constant(1, 1, 2.0), MatD::Constant(1, 1, 2.0)};
  out.target_scores = MatD::Constant(1, 1, 3.0);
  BatchTargets tgt;
  tgt.attr_labels = {{3.0}, {3.0 + std::sqrt(3.0)}};
  tgt.attr_idx = {{2}, {2}};
  tgt.target_labels = {3.0};
  tgt.target_idx = {2};
  LossBreakdown<double> lb =
      supervised_loss(cfg.model, out, tgt, MatD(), LossWeights{}, nullptr);
  CHECK(lb.per_attr[0] == doctest::Approx(1.0));
  CHECK(lb.per_attr[1] == doctest::Approx(3.0).epsilon(1e-9));
  CHECK(lb.attr == doctest::Approx(2.0).epsilon(1e-9));
  CHECK(lb.target == doctest::Approx(0.0));
  CHECK(lb.seg == doctest::Approx(0.0));
}

TEST_CASE("total composition follows the phase rule") {
  LossBreakdown<double> lb;
  lb.target = 1.0;
  lb.attr = 2.0;
  lb.seg = 0.5;
  lb.proto = 10.0;
  // Warm-up ignores the prototype term entirely.
  CHECK(lb.supervised() == doctest::Approx(3.5));
  // Final phase adds lambda * proto.
  CHECK(lb.total(0.01) == doctest::Approx(3.6));
  CHECK(lb.total(0.0) == doctest::Approx(lb.supervised()));
}

TEST_CASE("composition exactness over random breakdowns") {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.0, 10.0);
  for (int i = 0; i < 1000; ++i) {
    LossBreakdown<double> lb;
    lb.target = u(rng);
    lb.attr = u(rng);
    lb.seg = u(rng);
    lb.proto = u(rng);
    double lambda = u(rng) / 10.0;
    CHECK(lb.supervised() == lb.target + lb.attr + lb.seg);
    CHECK(lb.total(lambda) == lb.target + lb.attr + lb.seg + lambda * lb.proto);
  }
}

TEST_CASE("inverse frequency weights normalize to mean one") {
  // Balanced labels give all ones.
  auto w = inverse_frequency_weights({0, 1, 2, 0, 1, 2}, 3);
  for (double x : w) CHECK(x == doctest::Approx(1.0));
  // Imbalanced: rarer class gets the larger weight, present classes mean 1.
  w = inverse_frequency_weights({0, 0, 0, 1}, 2);
  CHECK(w[1] > w[0]);
  CHECK((w[0] + w[1]) / 2.0 == doctest::Approx(1.0));
  // Absent class gets zero and is excluded from the mean.
  w = inverse_frequency_weights({0, 0, 2}, 3);
  CHECK(w[1] == 0.0);
  CHECK((w[0] + w[2]) / 2.0 == doctest::Approx(1.0));
}

TEST_CASE("class weights scale per-sample contributions") {
  MatD s(2, 1);
  s << 3.0, 3.0;
  ClassWeights cw;
  cw.active = true;
  cw.w = {2.0, 0.5, 1.0, 1.0, 1.0};
  double got = mse_loss(s, {2.0, 4.0}, {0, 1}, cw, nullptr);
  CHECK(got == doctest::Approx((2.0 * 1.0 + 0.5 * 1.0) / 2.0));

  MatD logits = MatD::Zero(1, 3);
  ClassWeights cw2;
  cw2.active = true;
  cw2.w = {3.0, 1.0, 1.0};
  CHECK(cross_entropy_loss(logits, {0}, cw2, nullptr) ==
        doctest::Approx(3.0 * std::log(3.0)).epsilon(1e-9));
}

TEST_CASE("target loss gradients match finite differences") {
  check_term_gradients(
      "target",
      [](const BatchGrads<double>& full, BatchGrads<double>& picked) {
        picked.d_target_scores = full.d_target_scores;
      },
      20, 1e-4);
}

TEST_CASE("attribute loss gradients match finite differences") {
  check_term_gradients(
      "attr",
      [](const BatchGrads<double>& full, BatchGrads<double>& picked) {
        picked.d_attr_scores = full.d_attr_scores;
      },
      20, 1e-4);
}

TEST_CASE("segmentation loss gradients match finite differences") {
  check_term_gradients(
      "seg",
      [](const BatchGrads<double>& full, BatchGrads<double>& picked) {
        picked.d_mask_logits = full.d_mask_logits;
      },
      20, 1e-4);
}

TEST_CASE("joint supervised gradients match finite differences") {
  check_term_gradients(
      "total",
      [](const BatchGrads<double>& full, BatchGrads<double>& picked) {
        picked = full;
      },
      20, 1e-4);
}
