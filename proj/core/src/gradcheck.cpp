#include "lga/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <ostream>

#include "lga/attention.hpp"
#include "lga/nn.hpp"
#include "lga/ops.hpp"
#include "lga/random.hpp"
#include "lga/training.hpp"

namespace lga::check {

namespace {

using Td = Tensor<double>;

Td random_tensor(Shape shape, Rng& rng) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  return Td::from_data(std::move(shape), std::move(v));
}

double probe(const Td& out, const std::vector<double>& weights) {
  auto d = out.data();
  double s = 0;
  for (std::size_t i = 0; i < d.size(); ++i) s += d[i] * weights[i];
  return s;
}

std::vector<std::size_t> pick_coords(std::size_t n, std::size_t limit, Rng& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (limit == 0 || limit >= n) return idx;
  for (std::size_t i = 0; i < limit; ++i) std::swap(idx[i], idx[i + rng.below(n - i)]);
  idx.resize(limit);
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace

GradCheckResult check_gradients(const std::string& name, const TensorList<double>& inputs,
                                const CheckedFn& fn, const GradCheckOptions& options) {
  GradCheckResult result;
  result.name = name;
  Rng rng(options.seed);

  for (const auto& in : inputs) {
    Td t = in.tensor;
    t.set_requires_grad(true);
    t.zero_grad();
  }
  std::vector<double> weights;
  {
    Td out = fn();
    weights.resize(out.numel());
    for (auto& w : weights) w = rng.uniform(-1.0, 1.0);
    auto r = Td::from_data(out.shape(), weights);
    sum(mul(out, r)).backward();
  }

  NoGradGuard no_grad;
  for (const auto& in : inputs) {
    Td t = in.tensor;
    const std::vector<double> analytic = t.has_grad()
                                             ? std::vector<double>(t.grad().begin(), t.grad().end())
                                             : std::vector<double>(t.numel(), 0.0);
    auto values = t.mutable_data();
    for (auto j : pick_coords(t.numel(), options.max_coords, rng)) {
      const double saved = values[j];
      values[j] = saved + options.epsilon;
      const double up = probe(fn(), weights);
      values[j] = saved - options.epsilon;
      const double down = probe(fn(), weights);
      values[j] = saved;
      const double numeric = (up - down) / (2 * options.epsilon);
      const double a = analytic[j];
      const double denom = std::max({std::abs(a), std::abs(numeric), options.floor});
      const double rel = std::abs(a - numeric) / denom;
      ++result.coords;
      if (rel <= options.strict_tolerance) ++result.strict_passes;
      if (rel > result.max_rel_error || result.worst_input.empty()) {
        if (rel >= result.max_rel_error) {
          result.max_rel_error = rel;
          result.worst_input = in.name + "[" + std::to_string(j) + "]";
        }
      }
    }
    t.zero_grad();
  }
  const double fraction =
      result.coords ? double(result.strict_passes) / double(result.coords) : 1.0;
  result.passed = result.max_rel_error <= options.tolerance && fraction >= options.strict_fraction;
  return result;
}

std::vector<GradCheckResult> check_ops(const GradCheckOptions& options) {
  Rng rng(options.seed + 1);
  std::vector<GradCheckResult> out;
  auto run = [&](const std::string& name, std::vector<Td> ins,
                 const std::function<Td(const std::vector<Td>&)>& f) {
    TensorList<double> named;
    for (std::size_t i = 0; i < ins.size(); ++i) named.push_back({"arg" + std::to_string(i), ins[i]});
    out.push_back(check_gradients(name, named, [&] { return f(ins); }, options));
  };
  auto r = [&](Shape s) { return random_tensor(std::move(s), rng); };

  run("add", {r({2, 3, 4}), r({3, 1})}, [](auto& a) { return add(a[0], a[1]); });
  run("sub", {r({3, 4}), r({4})}, [](auto& a) { return sub(a[0], a[1]); });
  run("mul", {r({2, 3}), r({2, 1})}, [](auto& a) { return mul(a[0], a[1]); });
  run("neg", {r({5})}, [](auto& a) { return neg(a[0]); });
  run("scale", {r({2, 3})}, [](auto& a) { return scale(a[0], 0.7); });
  run("add_scalar", {r({2, 3})}, [](auto& a) { return add_scalar(a[0], 1.5); });
  run("sum", {r({2, 3})}, [](auto& a) { return sum(a[0]); });
  run("mean", {r({2, 3})}, [](auto& a) { return mean(a[0]); });
  run("sum_axis", {r({2, 3, 4})}, [](auto& a) { return sum(a[0], 1); });
  run("mean_axis", {r({2, 3, 4})}, [](auto& a) { return mean(a[0], 2, true); });
  run("matmul", {r({2, 3, 4}), r({4, 5})}, [](auto& a) { return matmul(a[0], a[1]); });
  run("matmul_broadcast", {r({2, 1, 3, 4}), r({3, 4, 2})},
      [](auto& a) { return matmul(a[0], a[1]); });
  run("softmax", {r({2, 5, 3})}, [](auto& a) { return softmax(a[0], 1); });
  run("permute", {r({2, 3, 4})}, [](auto& a) { return permute(a[0], {2, 0, 1}); });
  run("transpose", {r({2, 3, 4})}, [](auto& a) { return transpose(a[0], 1, 2); });
  run("reshape", {r({2, 3, 4})}, [](auto& a) { return reshape(a[0], {6, 4}); });
  run("broadcast_to", {r({3, 1})}, [](auto& a) { return broadcast_to(a[0], {2, 3, 4}); });
  run("slice", {r({2, 6, 3})}, [](auto& a) { return slice(a[0], 1, 1, 4); });
  run("concat", {r({2, 3}), r({2, 2})}, [](auto& a) { return concat<double>({a[0], a[1]}, 1); });
  run("pad", {r({2, 4, 3})}, [](auto& a) { return pad(a[0], 1, 2, 1); });
  run("unfold", {r({2, 9, 3})}, [](auto& a) { return unfold(a[0], 1, 3, 2); });
  run("gather", {r({4, 3})}, [](auto& a) {
    return gather(a[0], {0, 5, 5, 7, 11, 2}, Shape{2, 3});
  });
  run("conv1d", {r({2, 3, 9}), r({4, 3, 3}), r({4})},
      [](auto& a) { return nn::conv1d(a[0], a[1], a[2], 2, 1); });
  run("layer_norm", {r({2, 3, 5}), r({5}), r({5})},
      [](auto& a) { return nn::layer_norm(a[0], a[1], a[2], 1e-5); });
  run("max_pool1d", {r({2, 3, 8})}, [](auto& a) { return nn::max_pool1d(a[0], 3, 2); });
  run("avg_pool1d", {r({2, 3, 8})}, [](auto& a) { return nn::avg_pool1d(a[0], 3, 2); });
  run("linear", {r({2, 3, 4}), r({4, 5}), r({5})},
      [](auto& a) { return nn::linear(a[0], a[1], a[2]); });
  run("relu", {r({4, 6})}, [](auto& a) { return nn::relu(a[0]); });
  run("sigmoid", {r({4, 6})}, [](auto& a) { return nn::sigmoid(scale(a[0], 4.0)); });
  {
    auto labels = Td::from_data({2, 3}, {1, 0, 1, 0, 0, 1});
    run("bce_with_logits", {r({2, 3})},
        [labels](auto& a) { return train::bce_with_logits(scale(a[0], 3.0), labels); });
  }
  run("multi_head_attention", {r({2, 3, 4}), r({2, 5, 4}), r({2, 5, 4}), r({2, 3, 5})},
      [](auto& a) { return attn::multi_head_attention(a[0], a[1], a[2], 2, a[3]); });
  return out;
}

std::vector<GradCheckResult> check_attention_variants(const GradCheckOptions& options) {
  std::vector<GradCheckResult> out;
  auto run_one = [&](attn::Variant variant, attn::PositionalEncoding pe) {
    attn::LgaConfig cfg;
    cfg.embed_dim = 8;
    cfg.heads = 2;
    cfg.window_len = 4;
    cfg.max_len = 32;
    cfg.max_relative = 6;
    cfg.variant = variant;
    cfg.pos_encoding = pe;
    Rng rng(options.seed + 2);
    auto w = attn::LgaWeights<double>::create(cfg, rng);
    // Position tables start at zero; random values exercise every term.
    for (Td t : {w.learned_positions, w.relative_bias}) {
      if (!t.defined()) continue;
      for (auto& v : t.mutable_data()) v = rng.uniform(-0.5, 0.5);
    }
    Td x = random_tensor({2, 8, 8}, rng);
    TensorList<double> inputs{{"x", x}};
    for (auto& [name, t] : w.parameters(cfg)) inputs.push_back({name, t});
    inputs.push_back({"norm.gamma", w.norm.gamma});
    inputs.push_back({"norm.beta", w.norm.beta});
    const std::string name = "attention:" + std::string(attn::to_string(variant)) + "+" +
                             std::string(attn::to_string(pe));
    out.push_back(check_gradients(
        name, inputs, [&] { return attn::attention_forward(x, cfg, w); }, options));
  };
  for (auto v : attn::kAllVariants) run_one(v, attn::PositionalEncoding::kNone);
  for (auto pe : attn::kAllEncodings) {
    if (pe != attn::PositionalEncoding::kNone) run_one(attn::Variant::kLga, pe);
  }
  return out;
}

GradCheckResult check_model(const model::ModelConfig& config, const GradCheckOptions& options,
                            const std::string& name) {
  auto m = model::LgaModel<double>::create(config, options.seed + 3);
  Rng rng(options.seed + 4);
  Td x = random_tensor({2, config.leads, config.input_length}, rng);
  auto inputs = m.parameters();
  inputs.push_back({"input", x});
  return check_gradients(name, inputs, [&] { return m.forward(x); }, options);
}

void write_report(const std::vector<GradCheckResult>& results, std::ostream& out) {
  std::size_t width = 4;
  for (const auto& r : results) width = std::max(width, r.name.size());
  out << std::left << std::setw(static_cast<int>(width)) << "op" << "  " << std::right
      << std::setw(8) << "coords" << "  " << std::setw(12) << "max_rel_err" << "  verdict  worst\n";
  for (const auto& r : results) {
    out << std::left << std::setw(static_cast<int>(width)) << r.name << "  " << std::right
        << std::setw(8) << r.coords << "  " << std::setw(12) << std::scientific
        << std::setprecision(3) << r.max_rel_error << std::defaultfloat << "  "
        << (r.passed ? "PASS   " : "FAIL   ") << "  " << r.worst_input << '\n';
  }
}

}  // namespace lga::check
