#include "advobj/victim.hpp"

#include <cmath>
#include <stdexcept>

#include "advobj/rng.hpp"

namespace advobj {
namespace {

void require_image(const Tensor& x, const char* what) {
  if (x.shape.size() != 3)
    throw std::invalid_argument(std::string(what) + ": expected (C,H,W), got " +
                                shape_str(x.shape));
}

void require_mask_fits(const Tensor& x, const Mask& m, const char* what) {
  require_image(x, what);
  if (x.shape[1] != m.height() || x.shape[2] != m.width())
    throw std::invalid_argument(std::string(what) + ": mask " +
                                shape_str(m.tensor().shape) + " does not cover image " +
                                shape_str(x.shape));
}

}  // namespace

Mask::Mask(Tensor m2d, Role role) : m_(std::move(m2d)), role_(role) {
  if (m_.shape.size() != 2)
    throw std::invalid_argument("mask: expected (H,W), got " + shape_str(m_.shape));
  std::int64_t ones = 0;
  for (double v : m_.data) {
    if (v != 0.0 && v != 1.0)
      throw std::invalid_argument("mask: entries must be exactly 0 or 1");
    ones += v == 1.0;
  }
  if (role_ == Role::kTarget && ones == 0)
    throw std::invalid_argument("mask: target mask selects no pixels");
}

std::int64_t Mask::area() const {
  std::int64_t ones = 0;
  for (double v : m_.data) ones += v == 1.0;
  return ones;
}

Mask box_mask(int h, int w, int y0, int x0, int bh, int bw, Mask::Role role) {
  if (y0 < 0 || x0 < 0 || bh < 1 || bw < 1 || y0 + bh > h || x0 + bw > w)
    throw std::invalid_argument("box_mask: box outside the image plane");
  Tensor m = Tensor::zeros({h, w});
  for (int y = y0; y < y0 + bh; ++y)
    for (int x = x0; x < x0 + bw; ++x) m.data[static_cast<size_t>(y) * w + x] = 1.0;
  return Mask(std::move(m), role);
}

bool masks_disjoint(const Mask& a, const Mask& b) {
  require_same_shape(a.tensor(), b.tensor(), "masks_disjoint");
  for (size_t i = 0; i < a.tensor().data.size(); ++i)
    if (a.tensor().data[i] == 1.0 && b.tensor().data[i] == 1.0) return false;
  return true;
}

Tensor broadcast_mask(const Tensor& m2d, int channels) {
  if (m2d.shape.size() != 2)
    throw std::invalid_argument("broadcast_mask: expected (H,W), got " + shape_str(m2d.shape));
  Tensor out = Tensor::zeros({channels, m2d.shape[0], m2d.shape[1]});
  for (int c = 0; c < channels; ++c)
    for (size_t i = 0; i < m2d.data.size(); ++i)
      out.data[static_cast<size_t>(c) * m2d.data.size() + i] = m2d.data[i];
  return out;
}

Scene::Scene(Tensor x_in, Mask target_in, Mask adv_in)
    : x(std::move(x_in)), target(std::move(target_in)), adv(std::move(adv_in)) {
  require_mask_fits(x, target, "scene");
  require_mask_fits(x, adv, "scene");
  if (target.role() != Mask::Role::kTarget || adv.role() != Mask::Role::kAdversarial)
    throw std::invalid_argument("scene: mask roles are swapped");
  if (!masks_disjoint(target, adv))
    throw std::invalid_argument("scene: target and adversarial masks overlap");
}

void Scene::set_adversarial(Tensor z_in, double bg_tol) {
  require_same_shape(z_in, x, "scene adversarial image");
  Tensor bm = broadcast_mask(adv.tensor(), x.shape[0]);
  for (size_t i = 0; i < z_in.data.size(); ++i)
    if (bm.data[i] == 0.0 && std::abs(z_in.data[i] - x.data[i]) > bg_tol)
      throw std::invalid_argument("scene: adversarial image disturbs the background");
  object = extract_object(z_in, adv);
  z = std::move(z_in);
}

Tensor compose_scene(const Tensor& x, const Tensor& a, const Mask& adv) {
  require_mask_fits(x, adv, "compose_scene");
  require_same_shape(a, x, "compose_scene object");
  if (adv.role() != Mask::Role::kAdversarial)
    throw std::invalid_argument("compose_scene: mask must carry the adversarial role");
  Tensor bm = broadcast_mask(adv.tensor(), x.shape[0]);
  Tensor z = x;
  for (size_t i = 0; i < z.data.size(); ++i)
    z.data[i] = x.data[i] * (1.0 - bm.data[i]) + a.data[i] * bm.data[i];
  return z;
}

Tensor extract_object(const Tensor& z, const Mask& adv) {
  require_mask_fits(z, adv, "extract_object");
  Tensor bm = broadcast_mask(adv.tensor(), z.shape[0]);
  return hadamard(z, bm);
}

VictimModel::VictimModel(Kind kind, int channels, int height, int width, DifferentiableFn fn,
                         std::vector<Tensor> params)
    : kind_(kind),
      channels_(channels),
      height_(height),
      width_(width),
      fn_(std::move(fn)),
      params_(std::move(params)) {
  if (fn_.arity() != 1 || fn_.input_shape(0) != Shape{channels_, height_, width_} ||
      fn_.output_shape() != Shape{height_, width_})
    throw std::invalid_argument("victim: graph shapes disagree with the declared geometry");
}

namespace {

VictimModel make_patch_pool(std::uint64_t seed, const VictimGeometry& g) {
  int C = g.channels, H = g.height, W = g.width, f = g.field;
  int hw = H * W, chw = C * H * W;
  int r = f / 2;
  Rng rng(derive_seed(seed, "victim-pool"));
  double wscale = g.weight_scale / std::sqrt(static_cast<double>(C) * f * f);

  Tensor weights = Tensor::zeros({hw, chw});
  Tensor bias = Tensor::zeros({hw});
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      size_t row = static_cast<size_t>(y) * W + x;
      for (int c = 0; c < C; ++c)
        for (int u = y - r; u <= y + r; ++u)
          for (int v = x - r; v <= x + r; ++v) {
            if (u < 0 || u >= H || v < 0 || v >= W) continue;
            size_t col = (static_cast<size_t>(c) * H + u) * W + v;
            weights.data[row * chw + col] = wscale * rng.normal();
          }
      bias.data[row] = g.bias_scale * rng.normal();
    }

  if (g.planted) {
    if (g.target_y0 < 0 || g.target_x0 < 0 || g.target_h < 1 || g.target_w < 1 ||
        g.target_y0 + g.target_h > H || g.target_x0 + g.target_w > W || g.sources.empty())
      throw std::invalid_argument("victim: planted target box falls outside the image");
    for (const PlantedSource& s : g.sources)
      if (s.y0 < 0 || s.x0 < 0 || s.side < 1 || s.y0 + s.side > H || s.x0 + s.side > W ||
          !(s.gain > 0.0))
        throw std::invalid_argument("victim: planted source box or gain is invalid");
    Rng prng(derive_seed(seed, "victim-plant"));
    for (int y = g.target_y0; y < g.target_y0 + g.target_h; ++y)
      for (int x = g.target_x0; x < g.target_x0 + g.target_w; ++x) {
        size_t row = static_cast<size_t>(y) * W + x;
        // shrink everything the row already reads, then wire it to every
        // source box with positive weights so raising a source raises depth
        for (int col = 0; col < chw; ++col) weights.data[row * chw + col] *= g.bg_scale;
        for (const PlantedSource& s : g.sources) {
          double pscale = s.gain / std::sqrt(static_cast<double>(C) * s.side * s.side);
          for (int c = 0; c < C; ++c)
            for (int u = s.y0; u < s.y0 + s.side; ++u)
              for (int v = s.x0; v < s.x0 + s.side; ++v) {
                size_t col = (static_cast<size_t>(c) * H + u) * W + v;
                weights.data[row * chw + col] += pscale * std::abs(prng.normal());
              }
        }
      }
  }

  FnBuilder fb;
  auto img = fb.input({C, H, W});
  auto pooled = fb.add(fb.matmul(fb.constant(weights), fb.reshape(img, {chw})),
                       fb.constant(bias));
  auto depth = fb.reshape(fb.offset(fb.softplus(pooled), g.depth_offset), {H, W});
  return VictimModel(VictimModel::Kind::kPatchPool, C, H, W, fb.build(depth),
                     {std::move(weights), std::move(bias)});
}

VictimModel make_tiny_conv(std::uint64_t seed, const VictimGeometry& g) {
  int C = g.channels, H = g.height, W = g.width, f = g.field, M = g.conv_channels;
  Rng rng(derive_seed(seed, "victim-conv"));
  double s1 = g.weight_scale / std::sqrt(static_cast<double>(C) * f * f);
  double s2 = g.weight_scale / std::sqrt(static_cast<double>(M) * f * f);
  Tensor k1 = scale(rng.normal_tensor({M, C, f, f}), s1);
  Tensor b1 = scale(rng.normal_tensor({M}), g.bias_scale);
  Tensor k2 = scale(rng.normal_tensor({1, M, f, f}), s2);
  Tensor b2 = scale(rng.normal_tensor({1}), g.bias_scale);

  Tensor b1_rep = Tensor::zeros({M, H, W});
  for (int m = 0; m < M; ++m)
    for (int i = 0; i < H * W; ++i)
      b1_rep.data[static_cast<size_t>(m) * H * W + i] = b1.data[static_cast<size_t>(m)];
  Tensor b2_rep = Tensor::full({1, H, W}, b2.data[0]);

  FnBuilder fb;
  auto img = fb.input({C, H, W});
  auto mid = fb.tanh(fb.add(fb.conv2d(img, fb.constant(k1)), fb.constant(std::move(b1_rep))));
  auto out = fb.add(fb.conv2d(mid, fb.constant(k2)), fb.constant(std::move(b2_rep)));
  auto depth = fb.reshape(fb.offset(fb.softplus(out), g.depth_offset), {H, W});
  return VictimModel(VictimModel::Kind::kTinyConv, C, H, W, fb.build(depth),
                     {std::move(k1), std::move(b1), std::move(k2), std::move(b2)});
}

}  // namespace

VictimModel make_victim(VictimModel::Kind kind, std::uint64_t seed, const VictimGeometry& g) {
  if (g.channels < 1 || g.height < 1 || g.width < 1)
    throw std::invalid_argument("victim: degenerate geometry");
  if (g.field < 1 || g.field % 2 == 0)
    throw std::invalid_argument("victim: receptive field side must be odd and positive");
  switch (kind) {
    case VictimModel::Kind::kPatchPool:
      return make_patch_pool(seed, g);
    case VictimModel::Kind::kTinyConv:
      if (g.planted)
        throw std::invalid_argument(
            "victim: planted wiring needs per-pixel weights; use the pooling kind");
      if (g.conv_channels < 1) throw std::invalid_argument("victim: conv channels must be >= 1");
      return make_tiny_conv(seed, g);
    case VictimModel::Kind::kLinearMean:
      return make_linear_mean_victim(g.channels, g.height, g.width, 1.0, g.depth_offset);
  }
  throw std::invalid_argument("victim: unknown kind");
}

VictimModel make_linear_mean_victim(int channels, int height, int width, double gain,
                                    double offset) {
  if (channels < 1 || height < 1 || width < 1)
    throw std::invalid_argument("victim: degenerate geometry");
  int hw = height * width, chw = channels * height * width;
  Tensor weights = Tensor::full({hw, chw}, gain / chw);
  FnBuilder fb;
  auto img = fb.input({channels, height, width});
  auto pooled = fb.matmul(fb.constant(std::move(weights)), fb.reshape(img, {chw}));
  auto depth = fb.reshape(fb.offset(pooled, offset), {height, width});
  return VictimModel(VictimModel::Kind::kLinearMean, channels, height, width, fb.build(depth),
                     {Tensor({2}, {gain, offset})});
}

Tensor masked_depth(const VictimModel& f, const Tensor& img, const Mask& target) {
  require_mask_fits(img, target, "masked_depth");
  return hadamard(f.depth(img), target.tensor());
}

double adv_loss(const VictimModel& f, const Tensor& x, const Tensor& z, const Mask& target,
                double lambda) {
  if (lambda <= 0.0) throw std::invalid_argument("adv_loss: lambda must be positive");
  require_mask_fits(x, target, "adv_loss");
  require_same_shape(z, x, "adv_loss candidate");
  Tensor dx = f.depth(x);
  Tensor dz = f.depth(z);
  double acc = 0.0;
  for (size_t i = 0; i < dx.data.size(); ++i) {
    double d = target.tensor().data[i] * (dz.data[i] - lambda * dx.data[i]);
    acc += d * d;
  }
  return acc;
}

DifferentiableFn adv_loss_fn(const VictimModel& f, const Tensor& x, const Mask& target,
                             double lambda, const Mask* adv) {
  if (lambda <= 0.0) throw std::invalid_argument("adv_loss: lambda must be positive");
  require_mask_fits(x, target, "adv_loss");
  Tensor ref = hadamard(f.depth(x), target.tensor());  // cached reference depth
  FnBuilder fb;
  auto z = fb.input(x.shape);
  FnBuilder::Expr candidate = z;
  if (adv != nullptr) {
    require_mask_fits(x, *adv, "adv_loss");
    Tensor bm = broadcast_mask(adv->tensor(), x.shape[0]);
    Tensor bg = x;
    for (size_t i = 0; i < bg.data.size(); ++i) bg.data[i] *= 1.0 - bm.data[i];
    candidate = fb.add(fb.hadamard(z, fb.constant(std::move(bm))), fb.constant(std::move(bg)));
  }
  auto depth = fb.apply(f.fn(), candidate);
  auto diff = fb.sub(fb.hadamard(depth, fb.constant(target.tensor())),
                     fb.constant(scale(ref, lambda)));
  return fb.build(fb.sum(fb.square(diff)));
}

double mrsr(const VictimModel& f, const Tensor& x, const Tensor& z, const Mask& target) {
  require_mask_fits(x, target, "mrsr");
  require_same_shape(z, x, "mrsr candidate");
  Tensor dx = f.depth(x);
  Tensor dz = f.depth(z);
  double base = 0.0, after = 0.0;
  for (size_t i = 0; i < dx.data.size(); ++i) {
    double m = target.tensor().data[i];
    base += m * dx.data[i];
    after += m * dz.data[i];
  }
  if (!(base > 0.0)) throw std::runtime_error("mrsr: reference depth sum must be positive");
  return (after - base) / base;
}

double mrsr_abs(const VictimModel& f, const Tensor& x, const Tensor& z, const Mask& target) {
  require_mask_fits(x, target, "mrsr");
  require_same_shape(z, x, "mrsr candidate");
  Tensor dx = f.depth(x);
  Tensor dz = f.depth(z);
  double base = 0.0, shift = 0.0;
  for (size_t i = 0; i < dx.data.size(); ++i) {
    double m = target.tensor().data[i];
    base += m * dx.data[i];
    shift += m * std::abs(dz.data[i] - dx.data[i]);
  }
  if (!(base > 0.0)) throw std::runtime_error("mrsr: reference depth sum must be positive");
  return shift / base;
}

Tensor quantize8(const Tensor& img) {
  Tensor out = img;
  for (double& v : out.data) {
    double c = std::min(std::max(v, 0.0), 1.0);
    v = std::round(c * 255.0) / 255.0;
  }
  return out;
}

}  // namespace advobj
