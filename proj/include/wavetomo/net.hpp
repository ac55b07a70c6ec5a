#ifndef WAVETOMO_NET_HPP
#define WAVETOMO_NET_HPP

#include <memory>
#include <string>
#include <vector>

#include "wavetomo/rng.hpp"

namespace wavetomo {

// Channels-last feature map: index (y * w + x) * c + ch.
struct Tensor {
  int h = 0, w = 0, c = 0;
  std::vector<double> data;

  Tensor() = default;
  Tensor(int hh, int ww, int cc) : h(hh), w(ww), c(cc), data(static_cast<size_t>(hh) * ww * cc) {}
  double& at(int y, int x, int ch) { return data[(static_cast<size_t>(y) * w + x) * c + ch]; }
  const double& at(int y, int x, int ch) const {
    return data[(static_cast<size_t>(y) * w + x) * c + ch];
  }
  size_t size() const { return data.size(); }
};

// Architecture descriptor. kind "unet": 2-level encoder-decoder with a skip
// connection (conv-conv / pool / conv-conv / up / concat / conv-conv / head).
// kind "encoder": strided funnel for trace-shaped input, three (2,1) pools to
// a square map, nearest resize to (out_h, out_w), then a two-conv head.
struct NetSpec {
  std::string kind = "unet";
  int in_c = 1;
  int base = 8;
  int out_c = 1;
  bool final_sigmoid = false;
  int out_h = 0, out_w = 0;  // encoder kind only

  std::string to_metadata() const;
  static NetSpec from_metadata(const std::string& text);
};

namespace detail {
class Block;
}

// A network instance owns per-layer activation caches, so one instance must
// not run two samples concurrently; clone per worker instead.
class Net {
 public:
  explicit Net(const NetSpec& spec);
  Net(const Net& other) : Net(other.spec_) {}
  Net& operator=(const Net&) = delete;
  ~Net();

  const NetSpec& spec() const { return spec_; }
  size_t param_count() const { return n_params_; }
  std::vector<double> init_params(Rng& rng) const;
  // Offset of the final convolution's parameters; zeroing [offset, count)
  // makes the forward pass identically zero whatever the other layers hold.
  size_t head_offset() const;

  // Runs up to the linear head; the sigmoid of a sigmoid-headed spec is NOT
  // applied here (losses want logits).
  Tensor forward(const Tensor& x, const std::vector<double>& params);
  // Inference output: logits, or probabilities when the spec asks for sigmoid.
  Tensor predict(const Tensor& x, const std::vector<double>& params);
  // Backpropagates d(loss)/d(logits) through the cached forward pass,
  // accumulating into param_grad (must be param_count zeros or a running sum);
  // returns d(loss)/d(input).
  Tensor backward(const Tensor& dlogits, const std::vector<double>& params,
                  std::vector<double>& param_grad);

 private:
  NetSpec spec_;
  size_t n_params_ = 0;
  std::vector<std::unique_ptr<detail::Block>> blocks_;
};

// 0.5 * mean squared error; writes d(loss)/d(pred) into dpred.
double mse_loss(const Tensor& pred, const Tensor& target, Tensor* dpred);

// Pixel-wise binary cross entropy on logits with positive-class weighting;
// writes d(loss)/d(logits). Targets are 0/1; pos_weight multiplies the
// positive terms (and their gradients).
double bce_with_logits(const Tensor& logits, const Tensor& target, double pos_weight,
                       Tensor* dlogits);

double sigmoid(double z);

}  // namespace wavetomo

#endif
