// tests/test_objectives.cpp

// Copyright 2026  The EKD Authors

// See ../LICENSE for clarification regarding multiple authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#include <algorithm>
#include <cmath>
#include <string>

#include "doctest.h"
#include "ekd/grad_check.hpp"
#include "ekd/objectives.hpp"
#include "scalar_oracle.hpp"
#include "test_util.hpp"

using namespace ekd;
using ekd::testing::random_tensor;
using ekd::testing::to_vector;

namespace {

// -log(sigmoid(1)), -log(sigmoid(0)) + 1, -log(sigmoid(-1)) + 1
constexpr double kIdentityLoss = 0.31326168751822286;
constexpr double kOrthogonalLoss = 1.6931471805599454;
constexpr double kAntiparallelLoss = 2.3132616875182228;

oracle::Matrix to_matrix(const Tensor &t) {
  oracle::Matrix m(t.rows(), std::vector<double>(t.cols()));
  for (std::size_t i = 0; i < t.rows(); ++i)
    for (std::size_t j = 0; j < t.cols(); ++j) m[i][j] = t(i, j);
  return m;
}

oracle::Layers to_layers(const std::vector<Tensor> &ts) {
  oracle::Layers out;
  for (const auto &t : ts) out.push_back(to_matrix(t));
  return out;
}

oracle::Layers to_layers(const std::vector<HiddenState> &hs) {
  oracle::Layers out;
  for (const auto &h : hs) out.push_back(to_matrix(h.values));
  return out;
}

struct Instance {
  TeacherStates teachers;                     // [m][tap]
  std::vector<std::vector<Tensor>> preds;     // [m][tap], width D
  std::vector<Tensor> wide_preds;             // [tap], width D*M
};

Instance random_instance(std::mt19937_64 &rng, std::size_t t, std::size_t d,
                         std::size_t m_count, std::size_t taps) {
  Instance inst;
  for (std::size_t m = 0; m < m_count; ++m) {
    std::vector<HiddenState> layers;
    std::vector<Tensor> preds;
    for (std::size_t i = 0; i < taps; ++i) {
      layers.push_back({random_tensor(rng, {t, d}, false, -2, 2), 2 * (i + 1), static_cast<int>(m)});
      preds.push_back(random_tensor(rng, {t, d}, true, -2, 2));
    }
    inst.teachers.push_back(std::move(layers));
    inst.preds.push_back(std::move(preds));
  }
  for (std::size_t i = 0; i < taps; ++i) {
    inst.wide_preds.push_back(random_tensor(rng, {t, d * m_count}, true, -2, 2));
  }
  return inst;
}

std::vector<oracle::Layers> teacher_layers(const TeacherStates &ts) {
  std::vector<oracle::Layers> out;
  for (const auto &t : ts) out.push_back(to_layers(t));
  return out;
}

HiddenState state(const Shape &shape, std::vector<double> v, int source = 0) {
  return {Tensor::from(shape, std::move(v)), 2, source};
}

}  // namespace

TEST_SUITE("cossim_timestep_avg") {
  TEST_CASE("identical rows") {
    const Tensor a = Tensor::from({2, 3}, {1, 2, 3, -1, 0.5, 4});
    CHECK(std::fabs(cossim_timestep_avg(a, a).item() - 1.0) < 1e-7);
  }
  TEST_CASE("orthogonal rows") {
    CHECK(cossim_timestep_avg(Tensor::from({1, 2}, {1, 0}), Tensor::from({1, 2}, {0, 1})).item() ==
          0.0);
  }
  TEST_CASE("average of a parallel and an orthogonal timestep") {
    const Tensor a = Tensor::from({2, 2}, {1, 0, 1, 0});
    const Tensor b = Tensor::from({2, 2}, {2, 0, 0, 3});
    CHECK(cossim_timestep_avg(a, b).item() == doctest::Approx(0.5).epsilon(1e-8));
  }
  TEST_CASE("shape mismatch") {
    CHECK_THROWS_AS(cossim_timestep_avg(Tensor::zeros({2, 2}), Tensor::zeros({2, 3})),
                    DimensionError);
  }
  TEST_CASE("zero rows contribute zero instead of failing") {
    const Tensor a = Tensor::from({2, 2}, {0, 0, 1, 1});
    CHECK(cossim_timestep_avg(a, a).item() == doctest::Approx(0.5).epsilon(1e-8));
  }
  TEST_CASE("positive scaling leaves the similarity unchanged") {
    // Exact invariance is broken only by eps_c, whose effect on one row is at
    // most eps_c / (|a_s| |b_s|). Rows drawn from [-10, 10]^6 keep it below 1e-9.
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 50; ++trial) {
      const Tensor a = random_tensor(rng, {4, 6}, false, -10, 10);
      const Tensor b = random_tensor(rng, {4, 6}, false, -10, 10);
      for (double c : {0.5, 3.0, 250.0}) {
        CHECK(std::fabs(cossim_timestep_avg(scale(a, c), b).item() -
                        cossim_timestep_avg(a, b).item()) < 1e-9);
      }
    }
  }
  TEST_CASE("scaling deviation stays within the eps bound for small rows") {
    std::mt19937_64 rng(15);
    for (int trial = 0; trial < 50; ++trial) {
      const Tensor a = random_tensor(rng, {3, 5}, false, -0.1, 0.1);
      const Tensor b = random_tensor(rng, {3, 5}, false, -0.1, 0.1);
      double bound = 0.0;
      for (std::size_t s = 0; s < 3; ++s) {
        double aa = 0.0, bb = 0.0;
        for (std::size_t j = 0; j < 5; ++j) {
          aa += a(s, j) * a(s, j);
          bb += b(s, j) * b(s, j);
        }
        bound += kCosineEps / (0.01 * std::sqrt(aa * bb));
      }
      CHECK(std::fabs(cossim_timestep_avg(scale(a, 0.01), b).item() -
                      cossim_timestep_avg(a, b).item()) <= bound / 3.0);
    }
  }
}

TEST_SUITE("layer_loss") {
  TEST_CASE("identical inputs") {
    const Tensor h = Tensor::from({2, 3}, {1, -2, 3, 0.5, 0.5, -1});
    CHECK(std::fabs(layer_loss(h, h).item() - 0.3132617) < 1e-6);
  }
  TEST_CASE("orthogonal single timestep") {
    CHECK(std::fabs(layer_loss(Tensor::from({1, 2}, {1, 0}), Tensor::from({1, 2}, {0, 1})).item() -
                    1.6931472) < 1e-6);
  }
  TEST_CASE("antiparallel single timestep") {
    CHECK(std::fabs(layer_loss(Tensor::from({1, 2}, {1, 0}), Tensor::from({1, 2}, {-1, 0})).item() -
                    2.3132617) < 1e-6);
  }
  TEST_CASE("shape mismatch") {
    CHECK_THROWS_AS(layer_loss(Tensor::zeros({2, 2}), Tensor::zeros({3, 2})), DimensionError);
  }
  TEST_CASE("bounds on random inputs") {
    std::mt19937_64 rng(99);
    for (int trial = 0; trial < 1000; ++trial) {
      const std::size_t t = 1 + trial % 5, d = 1 + trial % 8;
      const Tensor a = random_tensor(rng, {t, d}, false, -3, 3);
      const Tensor b = random_tensor(rng, {t, d}, false, -3, 3);
      const double loss = layer_loss(a, b).item();
      CHECK(loss >= kIdentityLoss - 1e-12);
      const double cos_term = -log_sigmoid(cossim_timestep_avg(a, b)).item();
      CHECK(cos_term <= kAntiparallelLoss - 1.0 + 1e-12);
    }
  }
  TEST_CASE("L1 term is not scale invariant") {
    std::mt19937_64 rng(6);
    const Tensor a = random_tensor(rng, {3, 4});
    const Tensor b = random_tensor(rng, {3, 4});
    CHECK(std::fabs(layer_loss(scale(a, 5.0), b).item() - layer_loss(a, b).item()) > 1e-3);
  }
  TEST_CASE("matches the scalar oracle under both normalizations") {
    std::mt19937_64 rng(12);
    for (int trial = 0; trial < 50; ++trial) {
      const Tensor a = random_tensor(rng, {4, 5});
      const Tensor b = random_tensor(rng, {4, 5});
      CHECK(std::fabs(layer_loss(a, b).item() - oracle::layer_loss(to_matrix(a), to_matrix(b))) <
            1e-12);
      CHECK(std::fabs(layer_loss(a, b, LossNormalization::sequence_sum).item() -
                      oracle::layer_loss(to_matrix(a), to_matrix(b), true)) < 1e-12);
    }
  }
  TEST_CASE("no gradient reaches the target") {
    std::mt19937_64 rng(13);
    Tensor s = random_tensor(rng, {3, 4}, true);
    Tensor t = random_tensor(rng, {3, 4}, true);
    backward(layer_loss(s, t));
    for (double g : t.grad()) CHECK(g == 0.0);
    double norm = 0.0;
    for (double g : s.grad()) norm += g * g;
    CHECK(norm > 0.0);
  }
  TEST_CASE("finite-difference check on random 4x8 inputs") {
    std::mt19937_64 rng(14);
    std::vector<Tensor> params{random_tensor(rng, {4, 8}, true)};
    const Tensor target = random_tensor(rng, {4, 8});
    const auto r = grad_check([&] { return layer_loss(params[0], target); }, params, 1e-5);
    CHECK(r.max_rel_error < 1e-4);
  }
}

TEST_SUITE("aggregation") {
  TEST_CASE("average of two teachers") {
    TeacherStates ts{{state({1, 2}, {1, 2}, 0)}, {state({1, 2}, {3, 4}, 1)}};
    const auto out = aggregate_average(ts);
    CHECK(out.mode == DistillMode::avg);
    CHECK(to_vector(out.layers[0].values) == std::vector<double>{2, 3});
  }
  TEST_CASE("single teacher average is the identity") {
    std::mt19937_64 rng(1);
    TeacherStates ts{{{random_tensor(rng, {3, 4}), 2, 0}, {random_tensor(rng, {3, 4}), 4, 0}}};
    const auto out = aggregate_average(ts);
    for (std::size_t i = 0; i < 2; ++i)
      CHECK(to_vector(out.layers[i].values) == to_vector(ts[0][i].values));
  }
  TEST_CASE("teacher order does not change the average") {
    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 20; ++trial) {
      TeacherStates ts;
      for (int m = 0; m < 3; ++m) ts.push_back({{random_tensor(rng, {2, 5}), 2, m}});
      TeacherStates perm{ts[2], ts[0], ts[1]};
      CHECK(to_vector(aggregate_average(ts).layers[0].values) ==
            to_vector(aggregate_average(perm).layers[0].values));
    }
  }
  TEST_CASE("concatenation in ensemble order") {
    TeacherStates ts{{state({1, 2}, {1, 2}, 0)}, {state({1, 2}, {3, 4}, 1)}};
    const auto out = aggregate_concat(ts);
    CHECK(to_vector(out.layers[0].values) == std::vector<double>{1, 2, 3, 4});
    CHECK(out.width() == 4);
  }
  TEST_CASE("single teacher concatenation is the identity") {
    TeacherStates ts{{state({2, 2}, {1, 2, 3, 4})}};
    CHECK(to_vector(aggregate_concat(ts).layers[0].values) == std::vector<double>{1, 2, 3, 4});
  }
  TEST_CASE("concatenated width is D_T * M") {
    TeacherStates ts;
    for (int m = 0; m < 3; ++m) ts.push_back({state({1, 2}, {1, 2}, m)});
    CHECK(aggregate_concat(ts).width() == 6);
  }
  TEST_CASE("permuting teachers permutes column blocks") {
    std::mt19937_64 rng(3);
    TeacherStates ts;
    for (int m = 0; m < 3; ++m) ts.push_back({{random_tensor(rng, {2, 3}), 2, m}});
    const Tensor base = aggregate_concat(ts).layers[0].values;
    const Tensor permuted = aggregate_concat(TeacherStates{ts[1], ts[2], ts[0]}).layers[0].values;
    const std::size_t order[] = {1, 2, 0};
    for (std::size_t r = 0; r < 2; ++r)
      for (std::size_t blk = 0; blk < 3; ++blk)
        for (std::size_t c = 0; c < 3; ++c)
          CHECK(permuted(r, blk * 3 + c) == base(r, order[blk] * 3 + c));
  }
  TEST_CASE("teachers with different widths or lengths are rejected") {
    TeacherStates wide{{state({1, 2}, {1, 2})}, {state({1, 3}, {1, 2, 3})}};
    CHECK_THROWS_AS(aggregate_average(wide), EnsembleShapeError);
    CHECK_THROWS_AS(aggregate_concat(wide), EnsembleShapeError);
    TeacherStates longer{{state({1, 2}, {1, 2})}, {state({2, 2}, {1, 2, 3, 4})}};
    CHECK_THROWS_AS(aggregate_average(longer), EnsembleShapeError);
  }
}

TEST_SUITE("ensemble losses") {
  TEST_CASE("M = 1 reduces every mode to the single-teacher loss") {
    std::mt19937_64 rng(21);
    const auto inst = random_instance(rng, 3, 4, 1, 3);
    const double single = loss_single(inst.preds[0], targets_single(inst.teachers, 0)).item();
    CHECK(loss_avg(inst.preds[0], aggregate_average(inst.teachers)).item() == single);
    CHECK(loss_concat(inst.preds[0], aggregate_concat(inst.teachers)).item() == single);
    CHECK(loss_multi_pred(inst.preds, targets_multi(inst.teachers)).item() == single);
  }

  TEST_CASE("predictions equal to targets give the floor value") {
    std::mt19937_64 rng(22);
    const auto inst = random_instance(rng, 3, 4, 2, 3);
    const auto avg = aggregate_average(inst.teachers);
    std::vector<Tensor> exact;
    for (const auto &h : avg.layers) exact.push_back(h.values);
    CHECK(std::fabs(loss_avg(exact, avg).item() - 0.3132617) < 1e-6);
    const auto cat = aggregate_concat(inst.teachers);
    exact.clear();
    for (const auto &h : cat.layers) exact.push_back(h.values);
    CHECK(std::fabs(loss_concat(exact, cat).item() - 0.3132617) < 1e-6);
  }

  TEST_CASE("identical teachers: avg, multi_pred and single agree") {
    std::mt19937_64 rng(23);
    auto inst = random_instance(rng, 4, 5, 1, 3);
    TeacherStates twins{inst.teachers[0], inst.teachers[0], inst.teachers[0]};
    std::vector<std::vector<Tensor>> same_preds(3, inst.preds[0]);
    const double single = loss_single(inst.preds[0], targets_single(twins, 0)).item();
    CHECK(std::fabs(loss_avg(inst.preds[0], aggregate_average(twins)).item() - single) < 1e-10);
    CHECK(std::fabs(loss_multi_pred(same_preds, targets_multi(twins)).item() - single) < 1e-10);
  }

  TEST_CASE("randomized instances match the scalar-loop oracle") {
    std::mt19937_64 rng(24);
    for (int trial = 0; trial < 100; ++trial) {
      const std::size_t t = 1 + rng() % 5, d = 1 + rng() % 8, M = 1 + rng() % 3,
                        taps = 1 + rng() % 3;
      const auto inst = random_instance(rng, t, d, M, taps);
      const auto tl = teacher_layers(inst.teachers);
      const double want_avg = oracle::avg(to_layers(inst.preds[0]), tl);
      const double want_cat = oracle::concat(to_layers(inst.wide_preds), tl);
      std::vector<oracle::Layers> pl;
      for (const auto &p : inst.preds) pl.push_back(to_layers(p));
      const double want_multi = oracle::multi_pred(pl, tl);
      CHECK(std::fabs(loss_avg(inst.preds[0], aggregate_average(inst.teachers)).item() - want_avg) <
            1e-10);
      CHECK(std::fabs(loss_concat(inst.wide_preds, aggregate_concat(inst.teachers)).item() -
                      want_cat) < 1e-10);
      CHECK(std::fabs(loss_multi_pred(inst.preds, targets_multi(inst.teachers)).item() -
                      want_multi) < 1e-10);
    }
  }

  TEST_CASE("every ensemble loss respects the lower bound") {
    std::mt19937_64 rng(25);
    for (int trial = 0; trial < 100; ++trial) {
      const auto inst = random_instance(rng, 1 + trial % 4, 2 + trial % 6, 1 + trial % 3, 3);
      CHECK(loss_avg(inst.preds[0], aggregate_average(inst.teachers)).item() >= kIdentityLoss - 1e-12);
      CHECK(loss_concat(inst.wide_preds, aggregate_concat(inst.teachers)).item() >=
            kIdentityLoss - 1e-12);
      CHECK(loss_multi_pred(inst.preds, targets_multi(inst.teachers)).item() >=
            kIdentityLoss - 1e-12);
    }
  }

  TEST_CASE("contract and dimension errors") {
    std::mt19937_64 rng(26);
    const auto inst = random_instance(rng, 2, 3, 2, 3);
    CHECK_THROWS_AS(loss_avg(inst.preds[0], aggregate_concat(inst.teachers)), ContractError);
    try {
      loss_concat(inst.preds[0], aggregate_concat(inst.teachers));
      FAIL("expected DimensionError");
    } catch (const DimensionError &e) {
      CHECK(std::string(e.what()).find("expected 6") != std::string::npos);
    }
    std::vector<std::vector<Tensor>> one_set{inst.preds[0]};
    CHECK_THROWS_AS(loss_multi_pred(one_set, targets_multi(inst.teachers)), ContractError);
    std::vector<Tensor> two_taps{inst.preds[0][0], inst.preds[0][1]};
    CHECK_THROWS_AS(loss_avg(two_taps, aggregate_average(inst.teachers)), ContractError);
  }

  TEST_CASE("gradients w.r.t. predictions pass finite differences") {
    std::mt19937_64 rng(27);
    auto inst = random_instance(rng, 3, 4, 2, 3);
    const auto avg = aggregate_average(inst.teachers);
    const auto cat = aggregate_concat(inst.teachers);
    const auto multi = targets_multi(inst.teachers);
    CHECK(grad_check([&] { return loss_avg(inst.preds[0], avg); }, inst.preds[0]).max_rel_error <
          1e-4);
    CHECK(grad_check([&] { return loss_concat(inst.wide_preds, cat); }, inst.wide_preds)
              .max_rel_error < 1e-4);
    std::vector<Tensor> flat;
    for (auto &set : inst.preds)
      for (auto &p : set) flat.push_back(p);
    CHECK(grad_check([&] { return loss_multi_pred(inst.preds, multi); }, flat).max_rel_error <
          1e-4);
  }

  TEST_CASE("distill_loss dispatches on the target mode") {
    std::mt19937_64 rng(28);
    const auto inst = random_instance(rng, 2, 3, 2, 2);
    std::vector<std::vector<Tensor>> one{inst.preds[0]};
    CHECK(distill_loss(one, aggregate_average(inst.teachers)).item() ==
          loss_avg(inst.preds[0], aggregate_average(inst.teachers)).item());
    CHECK(distill_loss(inst.preds, targets_multi(inst.teachers)).item() ==
          loss_multi_pred(inst.preds, targets_multi(inst.teachers)).item());
    CHECK_THROWS_AS(distill_loss(inst.preds, aggregate_average(inst.teachers)), ContractError);
  }
}
