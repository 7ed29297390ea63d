#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <stdexcept>
#include <vector>

#include "ddpolab/adam.hpp"
#include "ddpolab/checkpoint.hpp"
#include "ddpolab/diffusion.hpp"
#include "ddpolab/gradcheck.hpp"
#include "ddpolab/layers.hpp"
#include "ddpolab/models.hpp"
#include "ddpolab/rng.hpp"
#include "ddpolab/tape.hpp"
#include "ddpolab/tensor.hpp"
#include "doctest.h"

using namespace ddpolab;
using nn::Tensor;

namespace {

Tensor random_tensor(std::vector<int> shape, Rng& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (float& v : t.data()) v = static_cast<float>(scale * rng.normal());
  return t;
}

nn::ModelParams adhoc_params(std::vector<std::pair<std::string, Tensor>> entries) {
  nn::ModelParams p;
  p.arch = "adhoc";
  for (auto& [name, value] : entries) p.entries.push_back({name, std::move(value)});
  return p;
}

// Finishes a LossRecord whose graph was built by `body` over taped params.
nn::LossRecord record_loss(const nn::ModelParams& mp,
                           const std::function<nn::VarId(nn::Tape&, const nn::TapedParams&)>& body) {
  nn::LossRecord rec;
  nn::TapedParams tp(rec.tape, mp);
  rec.param_ids = tp.ids();
  rec.param_shapes = tp.shapes();
  rec.loss = body(rec.tape, tp);
  rec.value = rec.tape.scalar_value(rec.loss);
  return rec;
}

}  // namespace

TEST_CASE("splitmix64 and fnv1a64 match published vectors") {
  CHECK(splitmix64(0) == 0xE220A8397B1DCDAFull);
  CHECK(fnv1a64("") == 0xcbf29ce484222325ull);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cull);
}

TEST_CASE("seed derivation follows the documented mixing formulas") {
  CHECK(stage_seed(7, "data") == splitmix64(7 ^ fnv1a64("data")));
  CHECK(sample_seed(123, 45) == (123ull ^ splitmix64(45)));
  CHECK(stage_seed(7, "data") != stage_seed(7, "ddpo"));
  CHECK(stage_seed(7, "data") != stage_seed(8, "data"));
}

TEST_CASE("rng streams are reproducible and seed-sensitive") {
  Rng a(11), b(11), c(12);
  bool all_equal = true, any_diff = false;
  for (int i = 0; i < 64; ++i) {
    const std::uint64_t va = a.next_u64();
    all_equal = all_equal && (va == b.next_u64());
    any_diff = any_diff || (va != c.next_u64());
  }
  CHECK(all_equal);
  CHECK(any_diff);
}

TEST_CASE("rng uniform and uniform_int respect their ranges") {
  Rng rng(3);
  for (int i = 0; i < 10000; ++i) {
    const double u = rng.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
  bool seen[4] = {false, false, false, false};
  for (int i = 0; i < 1000; ++i) {
    const std::int64_t v = rng.uniform_int(2, 5);
    REQUIRE(v >= 2);
    REQUIRE(v <= 5);
    seen[v - 2] = true;
  }
  CHECK(seen[0]);
  CHECK(seen[1]);
  CHECK(seen[2]);
  CHECK(seen[3]);
}

TEST_CASE("rng normal has standard moments") {
  Rng rng(5);
  const int n = 200000;
  double sum = 0.0, sumsq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal();
    sum += z;
    sumsq += z * z;
  }
  const double mean = sum / n;
  const double var = sumsq / n - mean * mean;
  CHECK(std::abs(mean) < 0.02);
  CHECK(std::abs(var - 1.0) < 0.05);
}

TEST_CASE("tensor construction and invariants") {
  Tensor t({2, 3});
  CHECK(t.size() == 6);
  CHECK(t.rank() == 2);
  for (std::size_t i = 0; i < t.size(); ++i) CHECK(t[i] == 0.0f);

  CHECK(Tensor::full({2}, 3.5f)[1] == 3.5f);
  CHECK(Tensor::scalar(2.0f).size() == 1);
  CHECK_THROWS_AS(Tensor({2, 2}, {1.0f, 2.0f}), std::invalid_argument);
  CHECK_THROWS_AS(Tensor({0, 2}), std::invalid_argument);

  Tensor m({1, 2, 2}, {1, 2, 3, 4});
  CHECK(m.at3(0, 0, 1) == 2.0f);
  CHECK(m.at3(0, 1, 0) == 3.0f);
  CHECK(m.shape_str() == "[1x2x2]");
}

TEST_CASE("tensor checks throw with context") {
  Tensor a({2}), b({3});
  CHECK_THROWS_WITH_AS(check_same_shape(a, b, "addctx"),
                       doctest::Contains("addctx"), std::invalid_argument);
  Tensor bad({1}, {std::numeric_limits<float>::quiet_NaN()});
  CHECK_THROWS_WITH_AS(nn::check_finite(bad, "finctx"), doctest::Contains("finctx"),
                       std::invalid_argument);
}

TEST_CASE("conv3x3 hand cases") {
  // all-ones 2x2 input: every output pixel sees exactly 4 valid taps
  Tensor x = Tensor::full({1, 2, 2}, 1.0f);
  Tensor w = Tensor::full({1, 1, 3, 3}, 1.0f);
  Tensor b({1}, {1.0f});
  Tensor y = nn::conv3x3(x, w, b);
  REQUIRE(y.shape() == std::vector<int>{1, 2, 2});
  for (std::size_t i = 0; i < y.size(); ++i) CHECK(y[i] == doctest::Approx(5.0));

  // center-only kernel is the identity
  Tensor id = Tensor::zeros({1, 1, 3, 3});
  id[4] = 1.0f;
  Tensor z({1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
  Tensor out = nn::conv3x3(z, id, Tensor::zeros({1}));
  for (std::size_t i = 0; i < z.size(); ++i) CHECK(out[i] == doctest::Approx(z[i]));

  CHECK_THROWS_AS(nn::conv3x3(z, Tensor::zeros({1, 2, 3, 3}), Tensor::zeros({1})),
                  std::invalid_argument);
  CHECK_THROWS_AS(nn::conv3x3(z, id, Tensor::zeros({2})), std::invalid_argument);
}

TEST_CASE("affine hand case") {
  Tensor w({2, 2}, {1, 2, 3, 4});
  Tensor x({2}, {5, 6});
  Tensor b({2}, {1, 0});
  Tensor y = nn::affine(x, w, b);
  CHECK(y[0] == doctest::Approx(18.0));
  CHECK(y[1] == doctest::Approx(39.0));
  CHECK_THROWS_AS(nn::affine(Tensor({3}), w, b), std::invalid_argument);
}

TEST_CASE("activation values") {
  CHECK(nn::sigmoid(0.0f) == doctest::Approx(0.5));
  Tensor x({3}, {0.0f, 1.0f, -1.0f});
  Tensor y = nn::silu(x);
  CHECK(y[0] == doctest::Approx(0.0));
  CHECK(y[1] == doctest::Approx(0.731058578));
  CHECK(y[2] == doctest::Approx(-0.268941421));
}

TEST_CASE("resampling and pooling layers") {
  Tensor x({1, 2, 2}, {1, 2, 3, 4});
  Tensor d = nn::nearest_down2(x);
  REQUIRE(d.shape() == std::vector<int>{1, 1, 1});
  CHECK(d[0] == 1.0f);
  CHECK_THROWS_AS(nn::nearest_down2(Tensor({1, 3, 2})), std::invalid_argument);

  Tensor u = nn::nearest_up2(d);
  REQUIRE(u.shape() == std::vector<int>{1, 2, 2});
  for (std::size_t i = 0; i < u.size(); ++i) CHECK(u[i] == 1.0f);

  Tensor p = nn::avgpool2(x);
  CHECK(p[0] == doctest::Approx(2.5));

  Tensor cb = nn::channel_bias(Tensor::zeros({2, 1, 2}), Tensor({2}, {1.0f, -1.0f}));
  CHECK(cb[0] == 1.0f);
  CHECK(cb[2] == -1.0f);

  Tensor ax = nn::axpby(2.0, Tensor({1}, {1.0f}), -1.0, Tensor({1}, {3.0f}));
  CHECK(ax[0] == doctest::Approx(-1.0));

  CHECK_THROWS_AS(nn::add(Tensor({2}), Tensor({3})), std::invalid_argument);
  CHECK_THROWS_AS(nn::reshape(x, {5}), std::invalid_argument);
  CHECK(nn::reshape(x, {4}).data() == x.data());
}

TEST_CASE("time embedding basis") {
  Tensor e = nn::time_embedding(0, 8);
  REQUIRE(e.size() == 8);
  for (int i = 0; i < 4; ++i) {
    CHECK(e[2 * i] == doctest::Approx(0.0));
    CHECK(e[2 * i + 1] == doctest::Approx(1.0));
  }
  Tensor e1 = nn::time_embedding(1, 2);
  CHECK(e1[0] == doctest::Approx(std::sin(1.0)));
  CHECK(e1[1] == doctest::Approx(std::cos(1.0)));
  CHECK_THROWS_AS(nn::time_embedding(1, 3), std::invalid_argument);
}

TEST_CASE("architecture descriptors and init") {
  const nn::ArchSpec& d = nn::arch_spec(nn::kDenoiser16);
  CHECK(d.image_shape == std::vector<int>{1, 16, 16});
  CHECK_THROWS_AS(nn::arch_spec("unknown"), std::invalid_argument);
  CHECK(nn::is_denoiser_arch(nn::kToyDenoiser2));
  CHECK(!nn::is_denoiser_arch(nn::kClassifier16));
  CHECK(nn::is_classifier_arch(nn::kToyClassifier4));

  nn::ModelParams a = nn::init_params(nn::kDenoiser16, 9);
  nn::ModelParams b = nn::init_params(nn::kDenoiser16, 9);
  nn::ModelParams c = nn::init_params(nn::kDenoiser16, 10);
  REQUIRE(a.entries.size() == b.entries.size());
  bool equal = true, differs = false;
  for (std::size_t i = 0; i < a.entries.size(); ++i) {
    equal = equal && (a.entries[i].value.data() == b.entries[i].value.data());
    differs = differs || (a.entries[i].value.data() != c.entries[i].value.data());
  }
  CHECK(equal);
  CHECK(differs);
  for (float v : a.at("conv1.b").data()) CHECK(v == 0.0f);

  nn::validate_params(a);
  a.at("conv1.b") = Tensor({2});
  CHECK_THROWS_AS(nn::validate_params(a), std::invalid_argument);
}

TEST_CASE("denoiser forward contracts") {
  nn::ModelParams p = nn::init_params(nn::kDenoiser16, 1);
  Rng rng(2);
  Tensor x = random_tensor({1, 16, 16}, rng);
  AttributeVector c = AttributeVector::make(true, false, true, false, false);

  Tensor e1 = nn::denoiser_forward(p, x, 10, c);
  Tensor e2 = nn::denoiser_forward(p, x, 10, c);
  REQUIRE(e1.shape() == x.shape());
  CHECK(e1.data() == e2.data());

  // zeroed final layer silences the output
  nn::ModelParams pz = p;
  pz.at("conv4.w") = Tensor::zeros({1, 16, 3, 3});
  pz.at("conv4.b") = Tensor::zeros({1});
  Tensor z = nn::denoiser_forward(pz, x, 10, c);
  for (std::size_t i = 0; i < z.size(); ++i) CHECK(z[i] == 0.0f);

  Tensor bad = x;
  bad[0] = std::numeric_limits<float>::infinity();
  CHECK_THROWS_AS(nn::denoiser_forward(p, bad, 10, c), std::invalid_argument);
  CHECK_THROWS_AS(nn::denoiser_forward(p, Tensor({1, 8, 8}), 10, c), std::invalid_argument);
}

TEST_CASE("classifier forward contracts") {
  nn::ModelParams p = nn::init_params(nn::kClassifier16, 4);
  Rng rng(6);
  Tensor x = random_tensor({1, 16, 16}, rng);
  nn::ClassifierOut out = nn::classifier_forward(p, x);
  CHECK(out.logits.shape() == std::vector<int>{6});
  CHECK(out.features.shape() == std::vector<int>{32});

  nn::ModelParams pz = p;
  pz.at("fc2.w") = Tensor::zeros({6, 32});
  pz.at("fc2.b") = Tensor::zeros({6});
  nn::ClassifierOut zo = nn::classifier_forward(pz, x);
  for (int i = 0; i < 6; ++i) CHECK(zo.logits[i] == 0.0f);
}

TEST_CASE("cond vector layout") {
  AttributeVector c = AttributeVector::make(false, true, false, true, false);
  Tensor v = nn::cond_vector(0, c);
  REQUIRE(v.size() == static_cast<std::size_t>(nn::kCondDim));
  Tensor e = nn::time_embedding(0, nn::kTimeEmbedDim);
  for (int i = 0; i < nn::kTimeEmbedDim; ++i) CHECK(v[i] == e[i]);
  for (int i = 0; i < kNumAttributes; ++i) {
    CHECK(v[nn::kTimeEmbedDim + i] == static_cast<float>(c.bits[i]));
  }
}

TEST_CASE("backward of a squared parameter gives 2w") {
  nn::ModelParams p = adhoc_params({{"w", Tensor({1}, {3.0f})}});
  nn::LossRecord rec = record_loss(p, [](nn::Tape& t, const nn::TapedParams& tp) {
    return t.sum_sq_diff(tp.id("w"), Tensor::zeros({1}));
  });
  CHECK(rec.value == doctest::Approx(9.0));
  nn::GradSet g = nn::backward(rec);
  CHECK(g.at("w")[0] == doctest::Approx(6.0));
}

TEST_CASE("loss constant in a parameter yields zero gradient") {
  nn::ModelParams p =
      adhoc_params({{"w", Tensor({1}, {3.0f})}, {"unused", Tensor({2}, {1.0f, 2.0f})}});
  nn::LossRecord rec = record_loss(p, [](nn::Tape& t, const nn::TapedParams& tp) {
    return t.sum_sq_diff(tp.id("w"), Tensor::zeros({1}));
  });
  nn::GradSet g = nn::backward(rec);
  CHECK(g.at("unused")[0] == 0.0f);
  CHECK(g.at("unused")[1] == 0.0f);
}

TEST_CASE("grad_check is near-exact on a quadratic") {
  Rng rng(21);
  nn::ModelParams p = adhoc_params({{"w", random_tensor({3, 3}, rng)}});
  const Tensor target = random_tensor({3, 3}, rng);
  auto fn = [&](const nn::ModelParams& mp) {
    return record_loss(mp, [&](nn::Tape& t, const nn::TapedParams& tp) {
      return t.sum_sq_diff(tp.id("w"), target);
    });
  };
  nn::GradCheckResult res = nn::grad_check(p, fn, 1e-3);
  CHECK(res.coords_checked == 9);
  CHECK(res.max_rel_err < 1e-4);
}

TEST_CASE("grad_check flags a corrupted gradient") {
  Rng rng(22);
  nn::ModelParams p = adhoc_params({{"w", random_tensor({4}, rng)}});
  const Tensor target = random_tensor({4}, rng);
  auto fn = [&](const nn::ModelParams& mp) {
    return record_loss(mp, [&](nn::Tape& t, const nn::TapedParams& tp) {
      return t.sum_sq_diff(tp.id("w"), target);
    });
  };
  nn::LossRecord rec = fn(p);
  nn::GradSet g = nn::backward(rec);
  g.grads[0].second[2] *= 2.0f;
  nn::GradCheckResult res = nn::grad_check_against(p, fn, g, 1e-3);
  CHECK(res.max_rel_err > 0.4);
}

namespace {

// One randomized gradient check of `body` over `params`, inputs included as
// parameters so input gradients are covered too.
double layer_grad_err(nn::ModelParams params,
                      std::function<nn::VarId(nn::Tape&, const nn::TapedParams&)> body,
                      std::uint64_t seed, double h = 1e-3) {
  auto fn = [&](const nn::ModelParams& mp) { return record_loss(mp, body); };
  return nn::grad_check(params, fn, h, 200, seed).max_rel_err;
}

}  // namespace

TEST_CASE("randomized gradient checks cover every layer type") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(stage_seed(seed, "layer-check"));
    const Tensor t344 = random_tensor({3, 4, 4}, rng);
    const Tensor t322 = random_tensor({3, 2, 2}, rng);
    const Tensor t388 = random_tensor({3, 8, 8}, rng);
    const Tensor t5 = random_tensor({5}, rng);

    // conv3x3 (weights, bias, input). The loss is quadratic along any one
    // coordinate, so a larger h costs no truncation error and sits well
    // above the float32 forward noise.
    {
      nn::ModelParams p = adhoc_params({{"x", random_tensor({2, 4, 4}, rng)},
                                        {"w", random_tensor({3, 2, 3, 3}, rng, 0.5)},
                                        {"b", random_tensor({3}, rng, 0.1)}});
      const double err = layer_grad_err(
          p,
          [&](nn::Tape& t, const nn::TapedParams& tp) {
            return t.sum_sq_diff(t.conv3x3(tp.id("x"), tp.id("w"), tp.id("b")), t344);
          },
          seed, 1e-2);
      CHECK_MESSAGE(err < 1e-2, "conv3x3 seed ", seed, " err ", err);
    }
    // affine
    {
      nn::ModelParams p = adhoc_params({{"x", random_tensor({4}, rng)},
                                        {"w", random_tensor({5, 4}, rng, 0.5)},
                                        {"b", random_tensor({5}, rng, 0.1)}});
      const double err = layer_grad_err(
          p,
          [&](nn::Tape& t, const nn::TapedParams& tp) {
            return t.sum_sq_diff(t.affine(tp.id("x"), tp.id("w"), tp.id("b")), t5);
          },
          seed);
      CHECK_MESSAGE(err < 1e-2, "affine seed ", seed, " err ", err);
    }
    // silu. silu' crosses zero near x = -1.2785; a coordinate sampled there
    // has an analytic gradient at the finite difference noise floor and the
    // relative error would measure noise, not correctness. Keep inputs away
    // from the crossing and give every residual a fixed margin.
    {
      Tensor xs({3, 4, 4});
      Tensor target({3, 4, 4});
      for (std::size_t i = 0; i < xs.size(); ++i) {
        double v = rng.normal();
        if (std::abs(v + 1.2785) < 0.25) v += 0.5;
        xs.data()[i] = static_cast<float>(v);
        const double y = v / (1.0 + std::exp(-v));
        target.data()[i] = static_cast<float>(y - 1.5);
      }
      nn::ModelParams p = adhoc_params({{"x", xs}});
      const double err = layer_grad_err(
          p,
          [&](nn::Tape& t, const nn::TapedParams& tp) {
            return t.sum_sq_diff(t.silu(tp.id("x")), target);
          },
          seed);
      CHECK_MESSAGE(err < 1e-2, "silu seed ", seed, " err ", err);
    }
    // add + axpby
    {
      nn::ModelParams p = adhoc_params(
          {{"a", random_tensor({3, 4, 4}, rng)}, {"b", random_tensor({3, 4, 4}, rng)}});
      const double err = layer_grad_err(
          p,
          [&](nn::Tape& t, const nn::TapedParams& tp) {
            return t.sum_sq_diff(
                t.axpby(0.7, t.add(tp.id("a"), tp.id("b")), -1.3, tp.id("a")), t344);
          },
          seed);
      CHECK_MESSAGE(err < 1e-2, "add/axpby seed ", seed, " err ", err);
    }
    // channel_bias
    {
      nn::ModelParams p = adhoc_params(
          {{"x", random_tensor({3, 4, 4}, rng)}, {"b", random_tensor({3}, rng)}});
      const double err = layer_grad_err(
          p,
          [&](nn::Tape& t, const nn::TapedParams& tp) {
            return t.sum_sq_diff(t.channel_bias(tp.id("x"), tp.id("b")), t344);
          },
          seed);
      CHECK_MESSAGE(err < 1e-2, "channel_bias seed ", seed, " err ", err);
    }
    // nearest_down2
    {
      nn::ModelParams p = adhoc_params({{"x", random_tensor({3, 4, 4}, rng)}});
      const double err = layer_grad_err(
          p,
          [&](nn::Tape& t, const nn::TapedParams& tp) {
            return t.sum_sq_diff(t.nearest_down2(tp.id("x")), t322);
          },
          seed);
      CHECK_MESSAGE(err < 1e-2, "nearest_down2 seed ", seed, " err ", err);
    }
    // nearest_up2
    {
      nn::ModelParams p = adhoc_params({{"x", random_tensor({3, 4, 4}, rng)}});
      const double err = layer_grad_err(
          p,
          [&](nn::Tape& t, const nn::TapedParams& tp) {
            return t.sum_sq_diff(t.nearest_up2(tp.id("x")), t388);
          },
          seed);
      CHECK_MESSAGE(err < 1e-2, "nearest_up2 seed ", seed, " err ", err);
    }
    // avgpool2
    {
      nn::ModelParams p = adhoc_params({{"x", random_tensor({3, 4, 4}, rng)}});
      const double err = layer_grad_err(
          p,
          [&](nn::Tape& t, const nn::TapedParams& tp) {
            return t.sum_sq_diff(t.avgpool2(tp.id("x")), t322);
          },
          seed);
      CHECK_MESSAGE(err < 1e-2, "avgpool2 seed ", seed, " err ", err);
    }
    // flatten + bce bridge
    {
      nn::ModelParams p = adhoc_params({{"x", random_tensor({2, 2, 2}, rng)}});
      Tensor bits({8});
      for (int i = 0; i < 8; ++i) bits[i] = static_cast<float>(rng.uniform_int(0, 1));
      const double err = layer_grad_err(
          p,
          [&](nn::Tape& t, const nn::TapedParams& tp) {
            return t.bce_logits_mean(t.flatten(tp.id("x")), bits);
          },
          seed);
      CHECK_MESSAGE(err < 1e-2, "flatten/bce seed ", seed, " err ", err);
    }
    // gaussian_logprob bridge and the clipped-ratio scalar chain. The old
    // logprob is frozen up front; the base ratio e^0.05 sits inside the
    // clip window with margin, so no perturbation crosses the kink.
    {
      nn::ModelParams p = adhoc_params({{"mu", random_tensor({1, 2, 2}, rng, 0.3)}});
      const Tensor xobs = random_tensor({1, 2, 2}, rng, 0.3);
      const double adv = rng.normal();
      double lp_old = 0.0;
      {
        nn::Tape t0;
        nn::TapedParams tp0(t0, p);
        lp_old = t0.scalar_value(t0.gaussian_logprob(tp0.id("mu"), xobs, 0.7)) - 0.05;
      }
      auto body = [&](nn::Tape& t, const nn::TapedParams& tp) {
        nn::VarId lp = t.gaussian_logprob(tp.id("mu"), xobs, 0.7);
        nn::VarId ratio = t.s_exp(t.s_sub(lp, t.scalar_leaf(lp_old)));
        nn::VarId obj = t.s_min(t.s_scale(ratio, adv), t.s_scale(t.s_clamp(ratio, 0.8, 1.2), adv));
        return t.s_scale(obj, -1.0);
      };
      const double err = layer_grad_err(p, body, seed, 1e-4);
      CHECK_MESSAGE(err < 1e-2, "ratio chain seed ", seed, " err ", err);
    }
  }
}

TEST_CASE("random toy denoiser diffusion loss passes grad_check") {
  for (std::uint64_t seed : {0ull, 1ull, 2ull}) {
    nn::ModelParams p = nn::init_params(nn::kToyDenoiser2, stage_seed(seed, "toy"));
    VarianceSchedule sched = default_schedule();
    Rng data_rng(stage_seed(seed, "toy-data"));
    std::vector<Tensor> x0s;
    std::vector<AttributeVector> cs;
    for (int i = 0; i < 3; ++i) {
      x0s.push_back(random_tensor({1, 2, 2}, data_rng));
      cs.push_back(AttributeVector::from_index(static_cast<int>(data_rng.uniform_int(0, 31))));
    }
    auto fn = [&](const nn::ModelParams& mp) {
      Rng rng(42);
      return diffusion_loss(mp, x0s, cs, rng, sched);
    };
    // h=1e-2: the loss is quadratic along any single parameter coordinate, so
    // the larger step adds no truncation error and clears the float32 noise
    // floor that small-magnitude conv taps sit at with h=1e-3.
    nn::GradCheckResult res = nn::grad_check(p, fn, 1e-2, 200, seed);
    CHECK_MESSAGE(res.max_rel_err < 1e-2, "seed ", seed, " err ", res.max_rel_err,
                  " at ", res.worst_param);
  }
}

TEST_CASE("full-size denoiser loss passes grad_check") {
  // h=1e-2: the loss is quadratic per coordinate up to SiLU curvature, and
  // the larger step keeps float32 forward noise well under the threshold.
  Rng rng(77);
  const Tensor img = random_tensor({1, 16, 16}, rng, 0.5);
  const AttributeVector c = AttributeVector::make(true, false, false, true, false);

  nn::ModelParams dp = nn::init_params(nn::kDenoiser16, 100);
  const Tensor target = random_tensor({1, 16, 16}, rng);
  auto dfn = [&](const nn::ModelParams& mp) {
    return record_loss(mp, [&](nn::Tape& t, const nn::TapedParams& tp) {
      nn::VarId eps = nn::taped_denoiser_forward(t, tp, nn::kDenoiser16, t.leaf(img), 17, c);
      return t.sum_sq_diff(eps, target);
    });
  };
  nn::GradCheckResult dres = nn::grad_check(dp, dfn, 1e-2, 200, 0);
  CHECK_MESSAGE(dres.max_rel_err < 1e-2, "denoiser err ", dres.max_rel_err, " at ",
                dres.worst_param, "[", dres.worst_coord, "]");
}

TEST_CASE("miniature classifier cross-entropy passes grad_check") {
  for (std::uint64_t seed : {0ull, 1ull, 2ull}) {
    Rng rng(stage_seed(seed, "clf-check"));
    const Tensor img = random_tensor({1, 4, 4}, rng, 0.5);
    Tensor bits({6});
    for (int i = 0; i < 6; ++i) bits[i] = static_cast<float>(rng.uniform_int(0, 1));
    nn::ModelParams cp = nn::init_params(nn::kToyClassifier4, stage_seed(seed, "clf-init"));
    auto cfn = [&](const nn::ModelParams& mp) {
      return record_loss(mp, [&](nn::Tape& t, const nn::TapedParams& tp) {
        nn::VarId z = nn::taped_classifier_logits(t, tp, nn::kToyClassifier4, t.leaf(img));
        return t.bce_logits_mean(z, bits);
      });
    };
    nn::GradCheckResult cres = nn::grad_check(cp, cfn, 1e-2, 200, seed);
    CHECK_MESSAGE(cres.max_rel_err < 1e-2, "seed ", seed, " err ", cres.max_rel_err, " at ",
                  cres.worst_param, "[", cres.worst_coord, "]");
  }
}

TEST_CASE("s_min ties route the gradient to the first argument") {
  nn::ModelParams p =
      adhoc_params({{"a", Tensor({1}, {2.0f})}, {"b", Tensor({1}, {2.0f})}});
  nn::LossRecord rec = record_loss(p, [](nn::Tape& t, const nn::TapedParams& tp) {
    nn::VarId sa = t.sum_sq_diff(tp.id("a"), Tensor::zeros({1}));
    nn::VarId sb = t.sum_sq_diff(tp.id("b"), Tensor::zeros({1}));
    return t.s_min(sa, sb);
  });
  nn::GradSet g = nn::backward(rec);
  CHECK(g.at("a")[0] == doctest::Approx(4.0));
  CHECK(g.at("b")[0] == doctest::Approx(0.0));
}

TEST_CASE("mean_term_grads averages losses and gradients") {
  nn::ModelParams p = adhoc_params({{"w", Tensor({1}, {0.0f})}});
  auto term = [&](std::size_t i) {
    return record_loss(p, [&](nn::Tape& t, const nn::TapedParams& tp) {
      return t.sum_sq_diff(tp.id("w"), Tensor::full({1}, static_cast<float>(i)));
    });
  };
  nn::TermMean tm = nn::mean_term_grads(5, term, 1);
  CHECK(tm.loss == doctest::Approx(6.0));  // mean of 0,1,4,9,16
  CHECK(tm.grads.at("w")[0] == doctest::Approx(-4.0));
}

TEST_CASE("mean_term_grads is invariant to the thread count") {
  Rng rng(31);
  nn::ModelParams p = adhoc_params({{"w", random_tensor({3, 2, 3, 3}, rng, 0.5)},
                                    {"b", random_tensor({3}, rng, 0.1)}});
  std::vector<Tensor> xs, targets;
  for (int i = 0; i < 7; ++i) {
    xs.push_back(random_tensor({2, 4, 4}, rng));
    targets.push_back(random_tensor({3, 4, 4}, rng));
  }
  auto term = [&](std::size_t i) {
    return record_loss(p, [&](nn::Tape& t, const nn::TapedParams& tp) {
      return t.sum_sq_diff(t.conv3x3(t.leaf(xs[i]), tp.id("w"), tp.id("b")), targets[i]);
    });
  };
  nn::TermMean a = nn::mean_term_grads(7, term, 1);
  nn::TermMean b = nn::mean_term_grads(7, term, 3);
  CHECK(a.loss == b.loss);
  REQUIRE(a.grads.grads.size() == b.grads.grads.size());
  for (std::size_t i = 0; i < a.grads.grads.size(); ++i) {
    CHECK(a.grads.grads[i].second.data() == b.grads.grads[i].second.data());
  }
}

TEST_CASE("mean_term_grads propagates worker exceptions") {
  nn::ModelParams p = adhoc_params({{"w", Tensor({1}, {0.0f})}});
  auto term = [&](std::size_t i) -> nn::LossRecord {
    if (i == 2) throw std::runtime_error("term failure");
    return record_loss(p, [&](nn::Tape& t, const nn::TapedParams& tp) {
      return t.sum_sq_diff(tp.id("w"), Tensor::zeros({1}));
    });
  };
  CHECK_THROWS_AS(nn::mean_term_grads(4, term, 2), std::runtime_error);
}

TEST_CASE("adam zero gradients are a parameter fixpoint") {
  nn::ModelParams p = adhoc_params({{"w", Tensor({2}, {1.0f, -2.0f})}});
  nn::AdamState st = nn::AdamState::init(p, 0.1);
  nn::GradSet g;
  g.grads.push_back({"w", Tensor::zeros({2})});
  nn::adam_step(p, g, st);
  CHECK(p.at("w")[0] == 1.0f);
  CHECK(p.at("w")[1] == -2.0f);
  CHECK(st.t == 1);
}

TEST_CASE("adam lr zero leaves parameters but updates moments") {
  nn::ModelParams p = adhoc_params({{"w", Tensor({1}, {1.0f})}});
  nn::AdamState st = nn::AdamState::init(p, 0.0);
  nn::GradSet g;
  g.grads.push_back({"w", Tensor({1}, {2.0f})});
  nn::adam_step(p, g, st);
  CHECK(p.at("w")[0] == 1.0f);
  CHECK(st.m[0].second[0] != 0.0f);
  CHECK(st.v[0].second[0] != 0.0f);
}

TEST_CASE("adam first step matches the bias-corrected hand value") {
  nn::ModelParams p = adhoc_params({{"w", Tensor({1}, {0.0f})}});
  nn::AdamState st = nn::AdamState::init(p, 0.1);
  nn::GradSet g;
  g.grads.push_back({"w", Tensor({1}, {2.0f})});
  nn::adam_step(p, g, st);
  CHECK(p.at("w")[0] == doctest::Approx(-0.0999999995).epsilon(1e-6));

  nn::GradSet bad;
  bad.grads.push_back({"w", Tensor({1}, {std::numeric_limits<float>::quiet_NaN()})});
  CHECK_THROWS_AS(nn::adam_step(p, bad, st), std::exception);
}

TEST_CASE("adam bumps the parameter revision") {
  nn::ModelParams p = adhoc_params({{"w", Tensor({1}, {0.0f})}});
  const std::uint64_t rev = p.revision;
  nn::AdamState st = nn::AdamState::init(p, 0.1);
  nn::GradSet g;
  g.grads.push_back({"w", Tensor({1}, {1.0f})});
  nn::adam_step(p, g, st);
  CHECK(p.revision == rev + 1);
}

TEST_CASE("checkpoint round-trip is the identity") {
  nn::ModelParams p = nn::init_params(nn::kToyDenoiser2, 3);
  p.revision = 17;
  nn::CheckpointMeta meta;
  meta.set("seed", "3");
  meta.set("T", "50");
  meta.set("steps", "120");
  std::vector<std::uint8_t> bytes = nn::checkpoint_save(p, meta);
  auto [q, m2] = nn::checkpoint_load(bytes, nn::kToyDenoiser2);
  CHECK(q.arch == p.arch);
  CHECK(q.revision == 17);
  REQUIRE(q.entries.size() == p.entries.size());
  for (std::size_t i = 0; i < p.entries.size(); ++i) {
    CHECK(q.entries[i].name == p.entries[i].name);
    CHECK(q.entries[i].value.data() == p.entries[i].value.data());
  }
  CHECK(m2.get("seed") == "3");
  CHECK(m2.get("T") == "50");
  CHECK(m2.has("steps"));

  // a second save of the loaded params is byte-identical
  CHECK(nn::checkpoint_save(q, m2) == bytes);
}

TEST_CASE("checkpoint failure modes are distinct") {
  nn::ModelParams p = nn::init_params(nn::kToyDenoiser2, 3);
  nn::CheckpointMeta meta;
  std::vector<std::uint8_t> bytes = nn::checkpoint_save(p, meta);

  std::vector<std::uint8_t> corrupt = bytes;
  corrupt[0] ^= 0xFF;
  try {
    nn::checkpoint_load(corrupt);
    FAIL("expected BadMagic");
  } catch (const nn::CheckpointError& e) {
    CHECK(e.kind() == nn::CheckpointErrorKind::BadMagic);
  }

  std::vector<std::uint8_t> cut(bytes.begin(), bytes.begin() + bytes.size() / 2);
  try {
    nn::checkpoint_load(cut);
    FAIL("expected Truncated");
  } catch (const nn::CheckpointError& e) {
    CHECK(e.kind() == nn::CheckpointErrorKind::Truncated);
  }

  try {
    nn::checkpoint_load(bytes, nn::kClassifier16);
    FAIL("expected ShapeMismatch");
  } catch (const nn::CheckpointError& e) {
    CHECK(e.kind() == nn::CheckpointErrorKind::ShapeMismatch);
  }
}

TEST_CASE("checkpoint file io round-trips") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "ddpolab_nnkit_test";
  fs::create_directories(dir);
  const std::string path = (dir / "toy.ckpt").string();

  nn::ModelParams p = nn::init_params(nn::kToyClassifier4, 8);
  nn::CheckpointMeta meta;
  meta.set("seed", "8");
  nn::save_checkpoint_file(path, p, meta);
  auto [q, m] = nn::load_checkpoint_file(path, nn::kToyClassifier4);
  CHECK(q.entries.size() == p.entries.size());
  CHECK(m.get("seed") == "8");
  CHECK_THROWS_AS(nn::load_checkpoint_file((dir / "missing.ckpt").string()), std::exception);
  fs::remove_all(dir);
}
