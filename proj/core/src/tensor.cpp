#include "spare/tensor.hpp"

#include <algorithm>
#include <cmath>

namespace spare {

namespace {

std::string shape_str(const Tensor& t) {
  return "[" + std::to_string(t.rows) + "x" + std::to_string(t.cols) + "]";
}

}  // namespace

Parameter& ParameterSet::create(const std::string& name, int64_t rows, int64_t cols) {
  if (index_.count(name)) throw std::invalid_argument("parameter '" + name + "' already exists");
  auto param = std::make_unique<Parameter>();
  param->name = name;
  param->value = Tensor(rows, cols);
  param->grad = Tensor(rows, cols);
  index_.emplace(name, params_.size());
  params_.push_back(std::move(param));
  return *params_.back();
}

Parameter& ParameterSet::at(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::invalid_argument("no parameter '" + name + "'");
  return *params_[it->second];
}

const Parameter& ParameterSet::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::invalid_argument("no parameter '" + name + "'");
  return *params_[it->second];
}

void ParameterSet::zero_grads() {
  for (auto& p : params_) std::fill(p->grad.data.begin(), p->grad.data.end(), 0.0);
}

int64_t ParameterSet::scalar_count() const {
  int64_t n = 0;
  for (const auto& p : params_) n += p->value.rows * p->value.cols;
  return n;
}

Tape::Id Tape::push(Tensor value, std::function<void()> back) {
  Node node;
  node.grad = Tensor(value.rows, value.cols);
  node.value = std::move(value);
  node.back = std::move(back);
  nodes_.push_back(std::move(node));
  return static_cast<Id>(nodes_.size() - 1);
}

Tape::Id Tape::constant(Tensor value) { return push(std::move(value), {}); }

Tape::Id Tape::leaf(Parameter& param) {
  Id id = push(param.value, {});
  Parameter* p = &param;
  nodes_[static_cast<size_t>(id)].back = [this, id, p]() {
    const Tensor& g = grad_ref(id);
    if (!g.same_shape(p->grad))
      throw ShapeMismatch("leaf gradient does not match parameter '" + p->name + "'");
    for (size_t i = 0; i < g.data.size(); ++i) p->grad.data[i] += g.data[i];
  };
  return id;
}

Tape::Id Tape::linear(Id x, Id w, Id b) {
  const Tensor& xv = value(x);
  const Tensor& wv = value(w);
  const Tensor& bv = value(b);
  if (wv.cols != xv.cols)
    throw ShapeMismatch("linear: x " + shape_str(xv) + " vs W " + shape_str(wv));
  if (bv.rows != 1 || bv.cols != wv.rows)
    throw ShapeMismatch("linear: bias " + shape_str(bv) + " vs W " + shape_str(wv));
  int64_t n = xv.rows, in = xv.cols, out = wv.rows;
  Tensor y(n, out);
  for (int64_t i = 0; i < n; ++i)
    for (int64_t o = 0; o < out; ++o) {
      double acc = bv.at(0, o);
      for (int64_t k = 0; k < in; ++k) acc += xv.at(i, k) * wv.at(o, k);
      y.at(i, o) = acc;
    }
  Id id = push(std::move(y), {});
  nodes_[static_cast<size_t>(id)].back = [this, id, x, w, b, n, in, out]() {
    const Tensor& dy = grad_ref(id);
    const Tensor& xv2 = value(x);
    const Tensor& wv2 = value(w);
    Tensor& dx = grad_ref(x);
    Tensor& dw = grad_ref(w);
    Tensor& db = grad_ref(b);
    for (int64_t i = 0; i < n; ++i)
      for (int64_t o = 0; o < out; ++o) {
        double g = dy.at(i, o);
        if (g == 0.0) continue;
        db.at(0, o) += g;
        for (int64_t k = 0; k < in; ++k) {
          dx.at(i, k) += g * wv2.at(o, k);
          dw.at(o, k) += g * xv2.at(i, k);
        }
      }
  };
  return id;
}

Tape::Id Tape::add(Id a, Id b) {
  const Tensor& av = value(a);
  const Tensor& bv = value(b);
  if (!av.same_shape(bv))
    throw ShapeMismatch("add: " + shape_str(av) + " vs " + shape_str(bv));
  Tensor y = av;
  for (size_t i = 0; i < y.data.size(); ++i) y.data[i] += bv.data[i];
  Id id = push(std::move(y), {});
  nodes_[static_cast<size_t>(id)].back = [this, id, a, b]() {
    const Tensor& dy = grad_ref(id);
    Tensor& da = grad_ref(a);
    Tensor& db = grad_ref(b);
    for (size_t i = 0; i < dy.data.size(); ++i) {
      da.data[i] += dy.data[i];
      db.data[i] += dy.data[i];
    }
  };
  return id;
}

Tape::Id Tape::relu(Id x) {
  Tensor y = value(x);
  for (double& v : y.data) v = v > 0.0 ? v : 0.0;
  Id id = push(std::move(y), {});
  nodes_[static_cast<size_t>(id)].back = [this, id, x]() {
    const Tensor& dy = grad_ref(id);
    const Tensor& xv = value(x);
    Tensor& dx = grad_ref(x);
    for (size_t i = 0; i < dy.data.size(); ++i)
      if (xv.data[i] > 0.0) dx.data[i] += dy.data[i];
  };
  return id;
}

Tape::Id Tape::concat_cols(Id a, Id b) {
  const Tensor& av = value(a);
  const Tensor& bv = value(b);
  if (av.rows != bv.rows)
    throw ShapeMismatch("concat_cols: " + shape_str(av) + " vs " + shape_str(bv));
  Tensor y(av.rows, av.cols + bv.cols);
  for (int64_t i = 0; i < y.rows; ++i) {
    for (int64_t c = 0; c < av.cols; ++c) y.at(i, c) = av.at(i, c);
    for (int64_t c = 0; c < bv.cols; ++c) y.at(i, av.cols + c) = bv.at(i, c);
  }
  int64_t split = av.cols;
  Id id = push(std::move(y), {});
  nodes_[static_cast<size_t>(id)].back = [this, id, a, b, split]() {
    const Tensor& dy = grad_ref(id);
    Tensor& da = grad_ref(a);
    Tensor& db = grad_ref(b);
    for (int64_t i = 0; i < dy.rows; ++i) {
      for (int64_t c = 0; c < split; ++c) da.at(i, c) += dy.at(i, c);
      for (int64_t c = 0; c < db.cols; ++c) db.at(i, c) += dy.at(i, split + c);
    }
  };
  return id;
}

Tape::Id Tape::gather_rows(Id src, std::vector<int64_t> indices) {
  const Tensor& sv = value(src);
  for (int64_t i : indices)
    if (i < 0 || i >= sv.rows)
      throw ShapeMismatch("gather_rows: index " + std::to_string(i) + " out of " +
                          std::to_string(sv.rows) + " rows");
  Tensor y(static_cast<int64_t>(indices.size()), sv.cols);
  for (size_t r = 0; r < indices.size(); ++r)
    for (int64_t c = 0; c < sv.cols; ++c)
      y.at(static_cast<int64_t>(r), c) = sv.at(indices[r], c);
  Id id = push(std::move(y), {});
  auto idx = std::make_shared<std::vector<int64_t>>(std::move(indices));
  nodes_[static_cast<size_t>(id)].back = [this, id, src, idx]() {
    const Tensor& dy = grad_ref(id);
    Tensor& ds = grad_ref(src);
    for (size_t r = 0; r < idx->size(); ++r)
      for (int64_t c = 0; c < dy.cols; ++c)
        ds.at((*idx)[r], c) += dy.at(static_cast<int64_t>(r), c);
  };
  return id;
}

Tape::Id Tape::gather_multi(std::vector<Id> sources,
                            std::vector<std::pair<int32_t, int64_t>> picks) {
  if (sources.empty()) throw ShapeMismatch("gather_multi: no sources");
  int64_t cols = value(sources[0]).cols;
  for (Id s : sources)
    if (value(s).cols != cols) throw ShapeMismatch("gather_multi: mixed column counts");
  for (auto [s, r] : picks) {
    if (s < 0 || static_cast<size_t>(s) >= sources.size())
      throw ShapeMismatch("gather_multi: source index out of range");
    if (r < 0 || r >= value(sources[static_cast<size_t>(s)]).rows)
      throw ShapeMismatch("gather_multi: row " + std::to_string(r) + " out of range");
  }
  Tensor y(static_cast<int64_t>(picks.size()), cols);
  for (size_t i = 0; i < picks.size(); ++i) {
    const Tensor& sv = value(sources[static_cast<size_t>(picks[i].first)]);
    for (int64_t c = 0; c < cols; ++c)
      y.at(static_cast<int64_t>(i), c) = sv.at(picks[i].second, c);
  }
  Id id = push(std::move(y), {});
  auto src = std::make_shared<std::vector<Id>>(std::move(sources));
  auto pk = std::make_shared<std::vector<std::pair<int32_t, int64_t>>>(std::move(picks));
  nodes_[static_cast<size_t>(id)].back = [this, id, src, pk]() {
    const Tensor& dy = grad_ref(id);
    for (size_t i = 0; i < pk->size(); ++i) {
      Tensor& ds = grad_ref((*src)[static_cast<size_t>((*pk)[i].first)]);
      for (int64_t c = 0; c < dy.cols; ++c)
        ds.at((*pk)[i].second, c) += dy.at(static_cast<int64_t>(i), c);
    }
  };
  return id;
}

Tape::Id Tape::segment_aggregate(Id x, std::vector<int64_t> offsets, Agg mode) {
  const Tensor& xv = value(x);
  if (offsets.empty() || offsets.front() != 0)
    throw BadOffsets("offsets must start at 0");
  for (size_t i = 1; i < offsets.size(); ++i)
    if (offsets[i] < offsets[i - 1]) throw BadOffsets("offsets must be non-decreasing");
  if (offsets.back() != xv.rows)
    throw BadOffsets("offsets end at " + std::to_string(offsets.back()) + ", rows are " +
                     std::to_string(xv.rows));
  int64_t segments = static_cast<int64_t>(offsets.size()) - 1;
  Tensor y(segments, xv.cols);
  for (int64_t s = 0; s < segments; ++s) {
    int64_t lo = offsets[static_cast<size_t>(s)], hi = offsets[static_cast<size_t>(s) + 1];
    if (lo == hi) continue;  // empty segment stays the zero row
    for (int64_t r = lo; r < hi; ++r)
      for (int64_t c = 0; c < xv.cols; ++c) y.at(s, c) += xv.at(r, c);
    if (mode == Agg::Mean) {
      double inv = 1.0 / static_cast<double>(hi - lo);
      for (int64_t c = 0; c < xv.cols; ++c) y.at(s, c) *= inv;
    }
  }
  Id id = push(std::move(y), {});
  auto offs = std::make_shared<std::vector<int64_t>>(std::move(offsets));
  nodes_[static_cast<size_t>(id)].back = [this, id, x, offs, mode]() {
    const Tensor& dy = grad_ref(id);
    Tensor& dx = grad_ref(x);
    for (int64_t s = 0; s + 1 < static_cast<int64_t>(offs->size()); ++s) {
      int64_t lo = (*offs)[static_cast<size_t>(s)], hi = (*offs)[static_cast<size_t>(s) + 1];
      if (lo == hi) continue;
      double scale = mode == Agg::Mean ? 1.0 / static_cast<double>(hi - lo) : 1.0;
      for (int64_t r = lo; r < hi; ++r)
        for (int64_t c = 0; c < dx.cols; ++c) dx.at(r, c) += scale * dy.at(s, c);
    }
  };
  return id;
}

Tape::Id Tape::mse_loss(Id pred, Id target) {
  const Tensor& pv = value(pred);
  const Tensor& tv = value(target);
  if (!pv.same_shape(tv) || pv.cols != 1 || pv.rows < 1)
    throw ShapeMismatch("mse_loss: pred " + shape_str(pv) + " vs target " + shape_str(tv));
  double acc = 0.0;
  for (int64_t i = 0; i < pv.rows; ++i) {
    double d = pv.at(i, 0) - tv.at(i, 0);
    acc += d * d;
  }
  Tensor y(1, 1);
  y.at(0, 0) = acc / static_cast<double>(pv.rows);
  Id id = push(std::move(y), {});
  nodes_[static_cast<size_t>(id)].back = [this, id, pred, target]() {
    double g = grad_ref(id).at(0, 0);
    const Tensor& pv2 = value(pred);
    const Tensor& tv2 = value(target);
    Tensor& dp = grad_ref(pred);
    double inv = 2.0 / static_cast<double>(pv2.rows);
    for (int64_t i = 0; i < pv2.rows; ++i)
      dp.at(i, 0) += g * inv * (pv2.at(i, 0) - tv2.at(i, 0));
  };
  return id;
}

Tape::Id Tape::bce_logits_loss(Id logits, Id labels) {
  const Tensor& zv = value(logits);
  const Tensor& yv = value(labels);
  if (!zv.same_shape(yv) || zv.cols != 1 || zv.rows < 1)
    throw ShapeMismatch("bce_logits_loss: logits " + shape_str(zv) + " vs labels " +
                        shape_str(yv));
  double acc = 0.0;
  for (int64_t i = 0; i < zv.rows; ++i) {
    double z = zv.at(i, 0), y = yv.at(i, 0);
    acc += std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::fabs(z)));
  }
  Tensor out(1, 1);
  out.at(0, 0) = acc / static_cast<double>(zv.rows);
  Id id = push(std::move(out), {});
  nodes_[static_cast<size_t>(id)].back = [this, id, logits, labels]() {
    double g = grad_ref(id).at(0, 0);
    const Tensor& zv2 = value(logits);
    const Tensor& yv2 = value(labels);
    Tensor& dz = grad_ref(logits);
    double inv = 1.0 / static_cast<double>(zv2.rows);
    for (int64_t i = 0; i < zv2.rows; ++i) {
      double z = zv2.at(i, 0);
      double sig = z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
      dz.at(i, 0) += g * inv * (sig - yv2.at(i, 0));
    }
  };
  return id;
}

void Tape::backward(Id loss) {
  const Tensor& lv = value(loss);
  if (lv.rows != 1 || lv.cols != 1)
    throw NonScalarLoss("backward needs a 1x1 loss, got " + shape_str(lv));
  grad_ref(loss).at(0, 0) = 1.0;
  for (size_t i = nodes_.size(); i-- > 0;)
    if (nodes_[i].back) nodes_[i].back();
}

Tape::Id apply_mlp(Tape& tape, const std::vector<MlpLayer>& layers, Tape::Id x) {
  Tape::Id y = x;
  for (const MlpLayer& layer : layers) {
    y = tape.linear(y, layer.w, layer.b);
    if (layer.relu) y = tape.relu(y);
  }
  return y;
}

Optimizer Optimizer::sgd(double lr) {
  Optimizer opt;
  opt.use_adam_ = false;
  opt.lr_ = lr;
  return opt;
}

Optimizer Optimizer::adam(const AdamConfig& config) {
  Optimizer opt;
  opt.use_adam_ = true;
  opt.adam_ = config;
  return opt;
}

void Optimizer::step(ParameterSet& params) {
  for (const auto& p : params.entries())
    for (double g : p->grad.data)
      if (!std::isfinite(g))
        throw NonFiniteGradient("non-finite gradient in parameter '" + p->name + "'");

  if (!use_adam_) {
    for (const auto& p : params.entries())
      for (size_t i = 0; i < p->value.data.size(); ++i)
        p->value.data[i] -= lr_ * p->grad.data[i];
  } else {
    ++step_count_;
    double bc1 = 1.0 - std::pow(adam_.beta1, static_cast<double>(step_count_));
    double bc2 = 1.0 - std::pow(adam_.beta2, static_cast<double>(step_count_));
    for (const auto& p : params.entries()) {
      auto [it, inserted] = moments_.try_emplace(
          p->name, std::pair<Tensor, Tensor>{Tensor(p->value.rows, p->value.cols),
                                             Tensor(p->value.rows, p->value.cols)});
      Tensor& m = it->second.first;
      Tensor& v = it->second.second;
      for (size_t i = 0; i < p->value.data.size(); ++i) {
        double g = p->grad.data[i];
        m.data[i] = adam_.beta1 * m.data[i] + (1.0 - adam_.beta1) * g;
        v.data[i] = adam_.beta2 * v.data[i] + (1.0 - adam_.beta2) * g * g;
        double mh = m.data[i] / bc1;
        double vh = v.data[i] / bc2;
        p->value.data[i] -= adam_.lr * mh / (std::sqrt(vh) + adam_.eps);
      }
    }
  }
  params.zero_grads();
}

double grad_check(ParameterSet& params, const std::function<double(bool)>& f, double eps) {
  params.zero_grads();
  f(true);
  std::vector<std::vector<double>> analytic;
  for (const auto& p : params.entries()) analytic.push_back(p->grad.data);
  params.zero_grads();

  double worst = 0.0;
  size_t pi = 0;
  for (const auto& p : params.entries()) {
    for (size_t i = 0; i < p->value.data.size(); ++i) {
      double saved = p->value.data[i];
      p->value.data[i] = saved + eps;
      double hi = f(false);
      p->value.data[i] = saved - eps;
      double lo = f(false);
      p->value.data[i] = saved;
      double numeric = (hi - lo) / (2.0 * eps);
      double a = analytic[pi][i];
      double err = std::fabs(a - numeric) / std::max({1.0, std::fabs(a), std::fabs(numeric)});
      worst = std::max(worst, err);
    }
    ++pi;
  }
  return worst;
}

}  // namespace spare
