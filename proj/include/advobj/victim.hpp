#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "advobj/graph.hpp"
#include "advobj/tensor.hpp"

namespace advobj {

// Binary region mask over the image plane. Entries are exactly 0 or 1; a
// target-role mask must select at least one pixel (metric denominators depend
// on it).
struct Mask {
  enum class Role { kTarget, kAdversarial };

  Mask(Tensor m2d, Role role);
  static Mask target(Tensor m2d) { return Mask(std::move(m2d), Role::kTarget); }
  static Mask adversarial(Tensor m2d) { return Mask(std::move(m2d), Role::kAdversarial); }

  const Tensor& tensor() const { return m_; }
  Role role() const { return role_; }
  std::int64_t area() const;
  int height() const { return m_.shape[0]; }
  int width() const { return m_.shape[1]; }

 private:
  Tensor m_;
  Role role_;
};

Mask box_mask(int h, int w, int y0, int x0, int bh, int bw, Mask::Role role);
bool masks_disjoint(const Mask& a, const Mask& b);
// Replicate an (H,W) mask over channels to (C,H,W).
Tensor broadcast_mask(const Tensor& m2d, int channels);

// One attacked image: original, the region whose depth is attacked, the region
// the attacker may repaint, and (once generated) the repainted image and the
// extracted object. set_adversarial enforces that repainting never touched the
// background.
struct Scene {
  Tensor x;  // (C,H,W)
  Mask target;
  Mask adv;
  std::optional<Tensor> z;
  std::optional<Tensor> object;

  Scene(Tensor x_in, Mask target_in, Mask adv_in);
  void set_adversarial(Tensor z_in, double bg_tol = 1e-12);
};

// z = x*(1-m) + a*m with the adversarial mask broadcast over channels.
Tensor compose_scene(const Tensor& x, const Tensor& a, const Mask& adv);
// a = z*m: the content the attacker inserted.
Tensor extract_object(const Tensor& z, const Mask& adv);

// Differentiable image -> depth map. The two generated kinds keep every output
// strictly positive through a softplus head plus constant offset; the linear
// kind trades that head for exact closed-form depth (affine in the image mean)
// and is meant for metric calibration tests.
class VictimModel {
 public:
  enum class Kind { kPatchPool, kTinyConv, kLinearMean };

  VictimModel(Kind kind, int channels, int height, int width, DifferentiableFn fn,
              std::vector<Tensor> params);

  Kind kind() const { return kind_; }
  int channels() const { return channels_; }
  int height() const { return height_; }
  int width() const { return width_; }
  const DifferentiableFn& fn() const { return fn_; }
  Tensor depth(const Tensor& img) const { return fn_.evaluate(img); }

  // Raw parameter tensors for independent hand evaluation:
  //   patch_pool: {weights (H*W, C*H*W), bias (H*W)}
  //   tiny_conv: {kernel1 (M,C,f,f), bias1 (M), kernel2 (1,M,f,f), bias2 (1)}
  //   linear_mean: {gain+offset scalars packed as (2)}
  const std::vector<Tensor>& params() const { return params_; }

 private:
  Kind kind_;
  int channels_, height_, width_;
  DifferentiableFn fn_;
  std::vector<Tensor> params_;
};

// One square source box feeding the planted target rows, with its own gain.
struct PlantedSource {
  int y0 = 0;
  int x0 = 0;
  int side = 4;
  double gain = 1.5;
};

struct VictimGeometry {
  int channels = 1;
  int height = 16;
  int width = 16;
  int field = 5;           // receptive-field / kernel side, odd
  int conv_channels = 4;   // mid channels for the convolutional kind
  double depth_offset = 1.0;
  double weight_scale = 1.0;
  double bias_scale = 0.1;

  // Planted wiring (pooling kind only): depth rows inside the target box read
  // from the listed source boxes with positive weights at the given gains;
  // their remaining weights are shrunk by bg_scale. With decaying gains the
  // sources form a ladder of decreasingly useful attack surfaces.
  bool planted = false;
  int target_y0 = 0, target_x0 = 0, target_h = 4, target_w = 4;
  std::vector<PlantedSource> sources;
  double bg_scale = 0.03;
};

VictimModel make_victim(VictimModel::Kind kind, std::uint64_t seed, const VictimGeometry& g);
// depth(img) = gain*mean(img) + offset at every pixel; exact arithmetic anchor.
VictimModel make_linear_mean_victim(int channels, int height, int width, double gain,
                                    double offset);

// Depth map zeroed outside the target mask.
Tensor masked_depth(const VictimModel& f, const Tensor& img, const Mask& target);

// || f(z)*m - lambda*f(x)*m ||^2 summed over the target mask.
double adv_loss(const VictimModel& f, const Tensor& x, const Tensor& z, const Mask& target,
                double lambda);
// Same objective as a recorded graph over z. With an adversarial mask the
// candidate is first composited over x, so the gradient vanishes exactly
// outside the repaintable region.
DifferentiableFn adv_loss_fn(const VictimModel& f, const Tensor& x, const Mask& target,
                             double lambda, const Mask* adv = nullptr);

// Signed relative shift of summed target depth, and its mean-absolute variant.
double mrsr(const VictimModel& f, const Tensor& x, const Tensor& z, const Mask& target);
double mrsr_abs(const VictimModel& f, const Tensor& x, const Tensor& z, const Mask& target);

// Round-trip through the 8-bit pixel grid (crude robustness probe).
Tensor quantize8(const Tensor& img);

}  // namespace advobj
