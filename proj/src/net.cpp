#include "wavetomo/net.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace wavetomo {
namespace detail {

class Block {
 public:
  virtual ~Block() = default;
  virtual size_t params() const { return 0; }
  virtual void init(double* p, Rng& rng) const { (void)p, (void)rng; }
  virtual Tensor forward(const Tensor& x, const double* p) = 0;
  virtual Tensor backward(const Tensor& dy, const double* p, double* g) = 0;
};

class Conv : public Block {
 public:
  Conv(int in_c, int out_c, bool head = false) : in_c_(in_c), out_c_(out_c), head_(head) {}

  size_t params() const override { return static_cast<size_t>(9) * in_c_ * out_c_ + out_c_; }

  void init(double* p, Rng& rng) const override {
    const double std = std::sqrt((head_ ? 1.0 : 2.0) / (9.0 * in_c_));
    const size_t nw = static_cast<size_t>(9) * in_c_ * out_c_;
    for (size_t i = 0; i < nw; ++i) p[i] = std * rng.normal();
    for (int i = 0; i < out_c_; ++i) p[nw + i] = 0.0;
  }

  Tensor forward(const Tensor& x, const double* p) override {
    if (x.c != in_c_) throw std::invalid_argument("net: conv input channel mismatch");
    x_ = x;
    Tensor y(x.h, x.w, out_c_);
    const double* bias = p + static_cast<size_t>(9) * in_c_ * out_c_;
    for (int y0 = 0; y0 < x.h; ++y0) {
      for (int x0 = 0; x0 < x.w; ++x0) {
        double* out = &y.at(y0, x0, 0);
        for (int oc = 0; oc < out_c_; ++oc) out[oc] = bias[oc];
        for (int ky = 0; ky < 3; ++ky) {
          const int yy = y0 + ky - 1;
          if (yy < 0 || yy >= x.h) continue;
          for (int kx = 0; kx < 3; ++kx) {
            const int xx = x0 + kx - 1;
            if (xx < 0 || xx >= x.w) continue;
            const double* in = &x.at(yy, xx, 0);
            const double* w = p + static_cast<size_t>((ky * 3 + kx) * in_c_) * out_c_;
            for (int ic = 0; ic < in_c_; ++ic) {
              const double v = in[ic];
              const double* wr = w + static_cast<size_t>(ic) * out_c_;
              for (int oc = 0; oc < out_c_; ++oc) out[oc] += v * wr[oc];
            }
          }
        }
      }
    }
    return y;
  }

  Tensor backward(const Tensor& dy, const double* p, double* g) override {
    Tensor dx(x_.h, x_.w, in_c_);
    double* gb = g + static_cast<size_t>(9) * in_c_ * out_c_;
    for (int y0 = 0; y0 < x_.h; ++y0) {
      for (int x0 = 0; x0 < x_.w; ++x0) {
        const double* dyp = &dy.at(y0, x0, 0);
        for (int oc = 0; oc < out_c_; ++oc) gb[oc] += dyp[oc];
        for (int ky = 0; ky < 3; ++ky) {
          const int yy = y0 + ky - 1;
          if (yy < 0 || yy >= x_.h) continue;
          for (int kx = 0; kx < 3; ++kx) {
            const int xx = x0 + kx - 1;
            if (xx < 0 || xx >= x_.w) continue;
            const double* in = &x_.at(yy, xx, 0);
            double* dxp = &dx.at(yy, xx, 0);
            const size_t base = static_cast<size_t>((ky * 3 + kx) * in_c_) * out_c_;
            for (int ic = 0; ic < in_c_; ++ic) {
              const double v = in[ic];
              const double* wr = p + base + static_cast<size_t>(ic) * out_c_;
              double* gwr = g + base + static_cast<size_t>(ic) * out_c_;
              double acc = 0.0;
              for (int oc = 0; oc < out_c_; ++oc) {
                gwr[oc] += v * dyp[oc];
                acc += wr[oc] * dyp[oc];
              }
              dxp[ic] += acc;
            }
          }
        }
      }
    }
    return dx;
  }

 private:
  int in_c_, out_c_;
  bool head_;
  Tensor x_;
};

class Relu : public Block {
 public:
  Tensor forward(const Tensor& x, const double*) override {
    x_ = x;
    Tensor y = x;
    for (double& v : y.data) v = v > 0.0 ? v : 0.0;
    return y;
  }
  Tensor backward(const Tensor& dy, const double*, double*) override {
    Tensor dx = dy;
    for (size_t i = 0; i < dx.data.size(); ++i) {
      if (x_.data[i] <= 0.0) dx.data[i] = 0.0;
    }
    return dx;
  }

 private:
  Tensor x_;
};

class Pool : public Block {
 public:
  Pool(int ph, int pw) : ph_(ph), pw_(pw) {}

  Tensor forward(const Tensor& x, const double*) override {
    if (x.h % ph_ != 0 || x.w % pw_ != 0) {
      throw std::invalid_argument("net: pooled extent must divide the input");
    }
    h_ = x.h;
    w_ = x.w;
    Tensor y(x.h / ph_, x.w / pw_, x.c);
    const double inv = 1.0 / (ph_ * pw_);
    for (int y0 = 0; y0 < y.h; ++y0) {
      for (int x0 = 0; x0 < y.w; ++x0) {
        for (int ch = 0; ch < x.c; ++ch) {
          double acc = 0.0;
          for (int i = 0; i < ph_; ++i) {
            for (int j = 0; j < pw_; ++j) acc += x.at(y0 * ph_ + i, x0 * pw_ + j, ch);
          }
          y.at(y0, x0, ch) = acc * inv;
        }
      }
    }
    return y;
  }

  Tensor backward(const Tensor& dy, const double*, double*) override {
    Tensor dx(h_, w_, dy.c);
    const double inv = 1.0 / (ph_ * pw_);
    for (int y0 = 0; y0 < dy.h; ++y0) {
      for (int x0 = 0; x0 < dy.w; ++x0) {
        for (int ch = 0; ch < dy.c; ++ch) {
          const double v = dy.at(y0, x0, ch) * inv;
          for (int i = 0; i < ph_; ++i) {
            for (int j = 0; j < pw_; ++j) dx.at(y0 * ph_ + i, x0 * pw_ + j, ch) = v;
          }
        }
      }
    }
    return dx;
  }

 private:
  int ph_, pw_;
  int h_ = 0, w_ = 0;
};

// Nearest-neighbor resize; th == 0 doubles the input extent.
class Resize : public Block {
 public:
  Resize(int th, int tw) : th_(th), tw_(tw) {}

  Tensor forward(const Tensor& x, const double*) override {
    h_ = x.h;
    w_ = x.w;
    const int th = th_ > 0 ? th_ : 2 * x.h;
    const int tw = tw_ > 0 ? tw_ : 2 * x.w;
    Tensor y(th, tw, x.c);
    for (int y0 = 0; y0 < th; ++y0) {
      const int sy = static_cast<int>(static_cast<long>(y0) * x.h / th);
      for (int x0 = 0; x0 < tw; ++x0) {
        const int sx = static_cast<int>(static_cast<long>(x0) * x.w / tw);
        for (int ch = 0; ch < x.c; ++ch) y.at(y0, x0, ch) = x.at(sy, sx, ch);
      }
    }
    return y;
  }

  Tensor backward(const Tensor& dy, const double*, double*) override {
    Tensor dx(h_, w_, dy.c);
    for (int y0 = 0; y0 < dy.h; ++y0) {
      const int sy = static_cast<int>(static_cast<long>(y0) * h_ / dy.h);
      for (int x0 = 0; x0 < dy.w; ++x0) {
        const int sx = static_cast<int>(static_cast<long>(x0) * w_ / dy.w);
        for (int ch = 0; ch < dy.c; ++ch) dx.at(sy, sx, ch) += dy.at(y0, x0, ch);
      }
    }
    return dx;
  }

 private:
  int th_, tw_;
  int h_ = 0, w_ = 0;
};

}  // namespace detail

namespace {

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  if (a.h != b.h || a.w != b.w) throw std::invalid_argument("net: concat extent mismatch");
  Tensor y(a.h, a.w, a.c + b.c);
  for (int i = 0; i < a.h * a.w; ++i) {
    for (int ch = 0; ch < a.c; ++ch) y.data[static_cast<size_t>(i) * y.c + ch] = a.data[static_cast<size_t>(i) * a.c + ch];
    for (int ch = 0; ch < b.c; ++ch) {
      y.data[static_cast<size_t>(i) * y.c + a.c + ch] = b.data[static_cast<size_t>(i) * b.c + ch];
    }
  }
  return y;
}

void split_channels(const Tensor& d, int ca, Tensor* da, Tensor* db) {
  *da = Tensor(d.h, d.w, ca);
  *db = Tensor(d.h, d.w, d.c - ca);
  for (int i = 0; i < d.h * d.w; ++i) {
    for (int ch = 0; ch < ca; ++ch) da->data[static_cast<size_t>(i) * ca + ch] = d.data[static_cast<size_t>(i) * d.c + ch];
    for (int ch = 0; ch < d.c - ca; ++ch) {
      db->data[static_cast<size_t>(i) * db->c + ch] = d.data[static_cast<size_t>(i) * d.c + ca + ch];
    }
  }
}

}  // namespace

std::string NetSpec::to_metadata() const {
  std::ostringstream out;
  out << "kind=" << kind << ";in_c=" << in_c << ";base=" << base << ";out_c=" << out_c
      << ";final_sigmoid=" << (final_sigmoid ? 1 : 0) << ";out_h=" << out_h << ";out_w=" << out_w;
  return out.str();
}

NetSpec NetSpec::from_metadata(const std::string& text) {
  NetSpec s;
  std::istringstream in(text);
  std::string item;
  while (std::getline(in, item, ';')) {
    const size_t eq = item.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("net: bad spec metadata '" + text + "'");
    const std::string k = item.substr(0, eq), v = item.substr(eq + 1);
    if (k == "kind") s.kind = v;
    else if (k == "in_c") s.in_c = std::stoi(v);
    else if (k == "base") s.base = std::stoi(v);
    else if (k == "out_c") s.out_c = std::stoi(v);
    else if (k == "final_sigmoid") s.final_sigmoid = std::stoi(v) != 0;
    else if (k == "out_h") s.out_h = std::stoi(v);
    else if (k == "out_w") s.out_w = std::stoi(v);
    else throw std::invalid_argument("net: unknown spec field '" + k + "'");
  }
  return s;
}

Net::Net(const NetSpec& spec) : spec_(spec) {
  using detail::Conv;
  using detail::Pool;
  using detail::Relu;
  using detail::Resize;
  const int b = spec.base;
  if (spec.kind == "unet") {
    blocks_.push_back(std::make_unique<Conv>(spec.in_c, b));
    blocks_.push_back(std::make_unique<Relu>());
    blocks_.push_back(std::make_unique<Conv>(b, b));
    blocks_.push_back(std::make_unique<Relu>());  // skip is taken here
    blocks_.push_back(std::make_unique<Pool>(2, 2));
    blocks_.push_back(std::make_unique<Conv>(b, 2 * b));
    blocks_.push_back(std::make_unique<Relu>());
    blocks_.push_back(std::make_unique<Conv>(2 * b, 2 * b));
    blocks_.push_back(std::make_unique<Relu>());
    blocks_.push_back(std::make_unique<Resize>(0, 0));  // x2, then concat skip
    blocks_.push_back(std::make_unique<Conv>(3 * b, b));
    blocks_.push_back(std::make_unique<Relu>());
    blocks_.push_back(std::make_unique<Conv>(b, b));
    blocks_.push_back(std::make_unique<Relu>());
    blocks_.push_back(std::make_unique<Conv>(b, spec.out_c, true));
  } else if (spec.kind == "encoder") {
    if (spec.out_h <= 0 || spec.out_w <= 0) {
      throw std::invalid_argument("net: encoder spec needs out_h and out_w");
    }
    blocks_.push_back(std::make_unique<Conv>(spec.in_c, b));
    blocks_.push_back(std::make_unique<Relu>());
    blocks_.push_back(std::make_unique<Pool>(2, 1));
    blocks_.push_back(std::make_unique<Conv>(b, 2 * b));
    blocks_.push_back(std::make_unique<Relu>());
    blocks_.push_back(std::make_unique<Pool>(2, 1));
    blocks_.push_back(std::make_unique<Conv>(2 * b, 2 * b));
    blocks_.push_back(std::make_unique<Relu>());
    blocks_.push_back(std::make_unique<Pool>(2, 1));
    blocks_.push_back(std::make_unique<Conv>(2 * b, 2 * b));
    blocks_.push_back(std::make_unique<Relu>());
    blocks_.push_back(std::make_unique<Resize>(spec.out_h, spec.out_w));
    blocks_.push_back(std::make_unique<Conv>(2 * b, b));
    blocks_.push_back(std::make_unique<Relu>());
    blocks_.push_back(std::make_unique<Conv>(b, spec.out_c, true));
  } else {
    throw std::invalid_argument("net: unknown kind '" + spec.kind + "'");
  }
  for (const auto& blk : blocks_) n_params_ += blk->params();
}

Net::~Net() = default;

std::vector<double> Net::init_params(Rng& rng) const {
  std::vector<double> p(n_params_);
  size_t off = 0;
  for (const auto& blk : blocks_) {
    blk->init(p.data() + off, rng);
    off += blk->params();
  }
  return p;
}

size_t Net::head_offset() const { return n_params_ - blocks_.back()->params(); }

Tensor Net::forward(const Tensor& x, const std::vector<double>& params) {
  if (params.size() != n_params_) throw std::invalid_argument("net: wrong parameter count");
  Tensor t = x;
  size_t off = 0;
  const bool skip_wired = spec_.kind == "unet";
  Tensor skip;
  for (size_t i = 0; i < blocks_.size(); ++i) {
    t = blocks_[i]->forward(t, params.data() + off);
    off += blocks_[i]->params();
    if (skip_wired && i == 3) skip = t;
    if (skip_wired && i == 9) t = concat_channels(t, skip);
  }
  return t;
}

Tensor Net::predict(const Tensor& x, const std::vector<double>& params) {
  Tensor t = forward(x, params);
  if (spec_.final_sigmoid) {
    for (double& v : t.data) v = sigmoid(v);
  }
  return t;
}

Tensor Net::backward(const Tensor& dlogits, const std::vector<double>& params,
                     std::vector<double>& param_grad) {
  if (param_grad.size() != n_params_) throw std::invalid_argument("net: wrong gradient size");
  std::vector<size_t> offs(blocks_.size());
  {
    size_t off = 0;
    for (size_t i = 0; i < blocks_.size(); ++i) {
      offs[i] = off;
      off += blocks_[i]->params();
    }
  }
  Tensor d = dlogits;
  Tensor d_skip;
  const bool skip_wired = spec_.kind == "unet";
  for (size_t ii = blocks_.size(); ii-- > 0;) {
    if (skip_wired && ii == 9) {
      Tensor d_up;
      split_channels(d, 2 * spec_.base, &d_up, &d_skip);
      d = std::move(d_up);
    }
    d = blocks_[ii]->backward(d, params.data() + offs[ii], param_grad.data() + offs[ii]);
    if (skip_wired && ii == 4) {
      // the tensor after block 3 fed both the pool below and the skip concat
      for (size_t s = 0; s < d.data.size(); ++s) d.data[s] += d_skip.data[s];
    }
  }
  return d;
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double mse_loss(const Tensor& pred, const Tensor& target, Tensor* dpred) {
  if (pred.data.size() != target.data.size()) {
    throw std::invalid_argument("loss: prediction and target sizes disagree");
  }
  const double inv = 1.0 / static_cast<double>(pred.data.size());
  double loss = 0.0;
  if (dpred) *dpred = Tensor(pred.h, pred.w, pred.c);
  for (size_t i = 0; i < pred.data.size(); ++i) {
    const double r = pred.data[i] - target.data[i];
    loss += 0.5 * r * r;
    if (dpred) dpred->data[i] = r * inv;
  }
  return loss * inv;
}

double bce_with_logits(const Tensor& logits, const Tensor& target, double pos_weight,
                       Tensor* dlogits) {
  if (logits.data.size() != target.data.size()) {
    throw std::invalid_argument("loss: logits and target sizes disagree");
  }
  const double inv = 1.0 / static_cast<double>(logits.data.size());
  double loss = 0.0;
  if (dlogits) *dlogits = Tensor(logits.h, logits.w, logits.c);
  for (size_t i = 0; i < logits.data.size(); ++i) {
    const double z = logits.data[i];
    const double t = target.data[i];
    const double w = t > 0.5 ? pos_weight : 1.0;
    // stable form of -t log s(z) - (1-t) log(1 - s(z))
    loss += w * (std::max(z, 0.0) - z * t + std::log1p(std::exp(-std::abs(z))));
    if (dlogits) dlogits->data[i] = w * (sigmoid(z) - t) * inv;
  }
  return loss * inv;
}

}  // namespace wavetomo
