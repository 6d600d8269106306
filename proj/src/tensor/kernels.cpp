#include "woundcare/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "woundcare/error.hpp"

namespace woundcare {
namespace {

std::string dim_mismatch(const char* what, std::size_t got, std::size_t want) {
  return std::string(what) + " mismatch: got " + std::to_string(got) + ", expected " + std::to_string(want);
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  const Shape& x = a.shape();
  const Shape& y = b.shape();
  if (x.n != y.n) throw_invalid(std::string(op) + ": " + dim_mismatch("batch", y.n, x.n));
  if (x.c != y.c) throw_invalid(std::string(op) + ": " + dim_mismatch("channel", y.c, x.c));
  if (x.h != y.h) throw_invalid(std::string(op) + ": " + dim_mismatch("height", y.h, x.h));
  if (x.w != y.w) throw_invalid(std::string(op) + ": " + dim_mismatch("width", y.w, x.w));
}

// Output index range [lo, hi) whose input coordinate o*stride - pad + k lies in [0, extent).
std::pair<std::size_t, std::size_t> valid_range(std::size_t out_extent, int stride, int pad, int k,
                                                std::size_t in_extent) {
  const long long off = static_cast<long long>(k) - pad;
  long long lo = 0;
  if (off < 0) lo = (-off + stride - 1) / stride;
  long long hi = static_cast<long long>(out_extent);
  // largest o with o*stride + off <= in_extent - 1
  const long long last = static_cast<long long>(in_extent) - 1 - off;
  if (last < 0) return {0, 0};
  hi = std::min(hi, last / stride + 1);
  if (lo >= hi) return {0, 0};
  return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
}

}  // namespace

void ConvParams::validate() const {
  const Shape& ws = weight.shape();
  if (groups < 1) throw_invalid("conv groups must be positive");
  if (stride[0] < 1 || stride[1] < 1) throw_invalid("conv stride must be positive");
  if (padding[0] < 0 || padding[1] < 0) throw_invalid("conv padding must be non-negative");
  if (ws.n == 0 || ws.c == 0 || ws.h == 0 || ws.w == 0) throw_invalid("conv weight has an empty extent " + to_string(ws));
  if (ws.n % static_cast<std::size_t>(groups) != 0) {
    throw_invalid("conv out channels " + std::to_string(ws.n) + " not divisible by groups " + std::to_string(groups));
  }
  if (!bias.empty() && bias.size() != ws.n) throw_invalid("conv bias: " + dim_mismatch("length", bias.size(), ws.n));
}

void BatchNormParams::validate() const {
  const std::size_t n = gamma.size();
  if (beta.size() != n) throw_invalid("batchnorm beta: " + dim_mismatch("length", beta.size(), n));
  if (running_mean.size() != n) throw_invalid("batchnorm running_mean: " + dim_mismatch("length", running_mean.size(), n));
  if (running_var.size() != n) throw_invalid("batchnorm running_var: " + dim_mismatch("length", running_var.size(), n));
  if (!(eps >= 0.0f)) throw_invalid("batchnorm eps must be non-negative");
  for (float v : running_var) {
    if (v < 0.0f) throw_invalid("batchnorm running_var must be non-negative");
  }
}

Tensor conv2d(const Tensor& input, const ConvParams& p) {
  p.validate();
  const Shape& is = input.shape();
  const Shape& ws = p.weight.shape();
  const std::size_t groups = static_cast<std::size_t>(p.groups);
  if (is.c != ws.c * groups) throw_invalid("conv2d input " + dim_mismatch("channel", is.c, ws.c * groups));

  const long long reach_h = static_cast<long long>(is.h) + 2LL * p.padding[0] - static_cast<long long>(ws.h);
  const long long reach_w = static_cast<long long>(is.w) + 2LL * p.padding[1] - static_cast<long long>(ws.w);
  if (reach_h < 0) throw_invalid("conv2d height: kernel " + std::to_string(ws.h) + " exceeds padded input " + std::to_string(is.h + 2 * p.padding[0]));
  if (reach_w < 0) throw_invalid("conv2d width: kernel " + std::to_string(ws.w) + " exceeds padded input " + std::to_string(is.w + 2 * p.padding[1]));

  const Shape os{is.n, ws.n, static_cast<std::size_t>(reach_h / p.stride[0] + 1),
                 static_cast<std::size_t>(reach_w / p.stride[1] + 1)};
  Tensor out(os);
  const std::size_t out_per_group = ws.n / groups;
  const std::size_t in_per_group = ws.c;

  for (std::size_t n = 0; n < os.n; ++n) {
    for (std::size_t oc = 0; oc < os.c; ++oc) {
      auto dst = out.plane(n, oc);
      std::fill(dst.begin(), dst.end(), p.bias.empty() ? 0.0f : p.bias[oc]);
      const std::size_t g = oc / out_per_group;
      for (std::size_t icg = 0; icg < in_per_group; ++icg) {
        const auto src = input.plane(n, g * in_per_group + icg);
        for (std::size_t ky = 0; ky < ws.h; ++ky) {
          const auto [oy0, oy1] = valid_range(os.h, p.stride[0], p.padding[0], static_cast<int>(ky), is.h);
          for (std::size_t kx = 0; kx < ws.w; ++kx) {
            const float wv = p.weight.at(oc, icg, ky, kx);
            const auto [ox0, ox1] = valid_range(os.w, p.stride[1], p.padding[1], static_cast<int>(kx), is.w);
            for (std::size_t oy = oy0; oy < oy1; ++oy) {
              const std::size_t iy = oy * static_cast<std::size_t>(p.stride[0]) + ky - static_cast<std::size_t>(p.padding[0]);
              const float* row = src.data() + iy * is.w;
              float* orow = dst.data() + oy * os.w;
              if (p.stride[1] == 1) {
                const std::size_t shift = kx - static_cast<std::size_t>(p.padding[1]);
                for (std::size_t ox = ox0; ox < ox1; ++ox) orow[ox] += wv * row[ox + shift];
              } else {
                for (std::size_t ox = ox0; ox < ox1; ++ox) {
                  orow[ox] += wv * row[ox * static_cast<std::size_t>(p.stride[1]) + kx - static_cast<std::size_t>(p.padding[1])];
                }
              }
            }
          }
        }
      }
    }
  }
  return out;
}

ConvParams fold_batchnorm(const ConvParams& conv, const BatchNormParams& bn) {
  conv.validate();
  bn.validate();
  const std::size_t oc = conv.out_channels();
  if (bn.gamma.size() != oc) throw_invalid("fold_batchnorm: " + dim_mismatch("channel", bn.gamma.size(), oc));

  ConvParams folded = conv;
  folded.bias.assign(oc, 0.0f);
  const std::size_t per_out = conv.weight.size() / oc;
  auto w = folded.weight.data();
  for (std::size_t o = 0; o < oc; ++o) {
    const float scale = bn.gamma[o] / std::sqrt(bn.running_var[o] + bn.eps);
    for (std::size_t i = 0; i < per_out; ++i) w[o * per_out + i] *= scale;
    const float b = conv.bias.empty() ? 0.0f : conv.bias[o];
    folded.bias[o] = (b - bn.running_mean[o]) * scale + bn.beta[o];
  }
  return folded;
}

float apply_activation(float x, Activation kind) noexcept {
  switch (kind) {
    case Activation::identity:
      return x;
    case Activation::relu:
      return x > 0.0f ? x : 0.0f;
    case Activation::relu6:
      return std::clamp(x, 0.0f, 6.0f);
    case Activation::sigmoid: {
      // clamp keeps the result strictly inside (0, 1) in float precision
      const float s = 1.0f / (1.0f + std::exp(-x));
      return std::clamp(s, std::numeric_limits<float>::min(), std::nextafter(1.0f, 0.0f));
    }
    case Activation::hard_sigmoid:
      return std::clamp(x + 3.0f, 0.0f, 6.0f) / 6.0f;
    case Activation::hard_swish:
      return x * std::clamp(x + 3.0f, 0.0f, 6.0f) / 6.0f;
  }
  return x;
}

void activation_inplace(Tensor& x, Activation kind) noexcept {
  if (kind == Activation::identity) return;
  for (float& v : x.data()) v = apply_activation(v, kind);
}

Tensor activation(const Tensor& x, Activation kind) {
  Tensor out = x;
  activation_inplace(out, kind);
  return out;
}

Tensor adaptive_avg_pool(const Tensor& x, std::array<std::size_t, 2> out_hw) {
  const Shape& s = x.shape();
  if (out_hw[0] == 0 || out_hw[1] == 0) throw_invalid("adaptive_avg_pool: output extent must be positive");
  if (out_hw[0] > s.h) throw_invalid("adaptive_avg_pool height: " + std::to_string(out_hw[0]) + " exceeds input " + std::to_string(s.h));
  if (out_hw[1] > s.w) throw_invalid("adaptive_avg_pool width: " + std::to_string(out_hw[1]) + " exceeds input " + std::to_string(s.w));

  const auto [oh, ow] = out_hw;
  Tensor out(Shape{s.n, s.c, oh, ow});
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t c = 0; c < s.c; ++c) {
      const auto src = x.plane(n, c);
      auto dst = out.plane(n, c);
      for (std::size_t i = 0; i < oh; ++i) {
        const std::size_t y0 = i * s.h / oh;
        const std::size_t y1 = ((i + 1) * s.h + oh - 1) / oh;
        for (std::size_t j = 0; j < ow; ++j) {
          const std::size_t x0 = j * s.w / ow;
          const std::size_t x1 = ((j + 1) * s.w + ow - 1) / ow;
          float acc = 0.0f;
          for (std::size_t y = y0; y < y1; ++y) {
            for (std::size_t xx = x0; xx < x1; ++xx) acc += src[y * s.w + xx];
          }
          dst[i * ow + j] = acc / static_cast<float>((y1 - y0) * (x1 - x0));
        }
      }
    }
  }
  return out;
}

namespace {

struct Tap {
  std::size_t lo;
  std::size_t hi;
  float frac;
};

std::vector<Tap> half_pixel_taps(std::size_t in, std::size_t out) {
  std::vector<Tap> taps(out);
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t d = 0; d < out; ++d) {
    double src = (static_cast<double>(d) + 0.5) * scale - 0.5;
    if (src < 0.0) src = 0.0;
    std::size_t lo = static_cast<std::size_t>(src);
    if (lo > in - 1) lo = in - 1;
    const std::size_t hi = std::min(lo + 1, in - 1);
    taps[d] = Tap{lo, hi, static_cast<float>(src - static_cast<double>(lo))};
    if (lo == hi) taps[d].frac = 0.0f;
  }
  return taps;
}

}  // namespace

Tensor bilinear_resize(const Tensor& x, std::array<std::size_t, 2> out_hw) {
  const Shape& s = x.shape();
  if (out_hw[0] == 0 || out_hw[1] == 0) throw_invalid("bilinear_resize: output extent must be positive");
  if (s.h == 0 || s.w == 0) throw_invalid("bilinear_resize: input has an empty spatial extent");
  const auto [oh, ow] = out_hw;
  if (oh == s.h && ow == s.w) return x;

  const auto ty = half_pixel_taps(s.h, oh);
  const auto tx = half_pixel_taps(s.w, ow);
  Tensor out(Shape{s.n, s.c, oh, ow});
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t c = 0; c < s.c; ++c) {
      const auto src = x.plane(n, c);
      auto dst = out.plane(n, c);
      for (std::size_t i = 0; i < oh; ++i) {
        const float* r0 = src.data() + ty[i].lo * s.w;
        const float* r1 = src.data() + ty[i].hi * s.w;
        const float fy = ty[i].frac;
        for (std::size_t j = 0; j < ow; ++j) {
          const float fx = tx[j].frac;
          const float top = r0[tx[j].lo] + (r0[tx[j].hi] - r0[tx[j].lo]) * fx;
          const float bot = r1[tx[j].lo] + (r1[tx[j].hi] - r1[tx[j].lo]) * fx;
          dst[i * ow + j] = top + (bot - top) * fy;
        }
      }
    }
  }
  return out;
}

void AttentionParams::validate(std::size_t token_dim) const {
  if (head_count < 1) throw_invalid("attention head_count must be >= 1");
  if (key_dim < 1 || value_dim < 1) throw_invalid("attention key_dim/value_dim must be positive");
  const std::size_t hk = static_cast<std::size_t>(head_count * key_dim);
  const std::size_t hv = static_cast<std::size_t>(head_count * value_dim);
  const auto check = [&](const ConvParams& c, const char* name, std::size_t in, std::size_t out) {
    c.validate();
    const Shape& ws = c.weight.shape();
    if (ws.h != 1 || ws.w != 1 || c.groups != 1) throw_invalid(std::string("attention ") + name + " must be a dense 1x1 projection");
    if (ws.c != in) throw_invalid(std::string("attention ") + name + " input " + dim_mismatch("dim", ws.c, in));
    if (out != 0 && ws.n != out) throw_invalid(std::string("attention ") + name + " output " + dim_mismatch("dim", ws.n, out));
  };
  check(to_q, "to_q", token_dim, hk);
  check(to_k, "to_k", token_dim, hk);
  check(to_v, "to_v", token_dim, hv);
  check(proj, "proj", hv, 0);
}

namespace {

// Returns per-(batch, head) softmax matrices and leaves the projected values in `v`.
std::vector<std::vector<float>> attention_core(const Tensor& x, const AttentionParams& p, Tensor& v) {
  p.validate(x.shape().c);
  const Tensor q = conv2d(x, p.to_q);
  const Tensor k = conv2d(x, p.to_k);
  v = conv2d(x, p.to_v);
  const std::size_t tokens = x.shape().plane();
  const std::size_t kd = static_cast<std::size_t>(p.key_dim);
  const float scale = 1.0f / std::sqrt(static_cast<float>(p.key_dim));

  std::vector<std::vector<float>> result;
  for (std::size_t n = 0; n < x.shape().n; ++n) {
    for (std::size_t h = 0; h < static_cast<std::size_t>(p.head_count); ++h) {
      std::vector<float> a(tokens * tokens);
      for (std::size_t i = 0; i < tokens; ++i) {
        float* row = a.data() + i * tokens;
        float row_max = -std::numeric_limits<float>::infinity();
        for (std::size_t j = 0; j < tokens; ++j) {
          float dot = 0.0f;
          for (std::size_t d = 0; d < kd; ++d) {
            dot += q.plane(n, h * kd + d)[i] * k.plane(n, h * kd + d)[j];
          }
          row[j] = dot * scale;
          row_max = std::max(row_max, row[j]);
        }
        float sum = 0.0f;
        for (std::size_t j = 0; j < tokens; ++j) {
          row[j] = std::exp(row[j] - row_max);
          sum += row[j];
        }
        for (std::size_t j = 0; j < tokens; ++j) row[j] /= sum;
      }
      result.push_back(std::move(a));
    }
  }
  return result;
}

}  // namespace

std::vector<std::vector<float>> attention_weights(const Tensor& x, const AttentionParams& p) {
  Tensor v;
  return attention_core(x, p, v);
}

Tensor multi_head_attention(const Tensor& x, const AttentionParams& p) {
  Tensor v;
  const auto weights = attention_core(x, p, v);
  const Shape& s = x.shape();
  const std::size_t tokens = s.plane();
  const std::size_t vd = static_cast<std::size_t>(p.value_dim);
  const std::size_t heads = static_cast<std::size_t>(p.head_count);

  Tensor mixed(Shape{s.n, heads * vd, s.h, s.w});
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t h = 0; h < heads; ++h) {
      const auto& a = weights[n * heads + h];
      for (std::size_t d = 0; d < vd; ++d) {
        const auto src = v.plane(n, h * vd + d);
        auto dst = mixed.plane(n, h * vd + d);
        for (std::size_t i = 0; i < tokens; ++i) {
          float acc = 0.0f;
          for (std::size_t j = 0; j < tokens; ++j) acc += a[i * tokens + j] * src[j];
          dst[i] = acc;
        }
      }
    }
  }
  activation_inplace(mixed, p.pre_projection);
  return conv2d(mixed, p.proj);
}

Tensor elementwise(const Tensor& a, const Tensor& b, ElementwiseOp op) {
  require_same_shape(a, b, op == ElementwiseOp::add ? "add" : "mul");
  Tensor out = a;
  auto dst = out.data();
  const auto src = b.data();
  if (op == ElementwiseOp::add) {
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  } else {
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] *= src[i];
  }
  return out;
}

Tensor concat_channels(std::span<const Tensor> parts) {
  if (parts.empty()) throw_invalid("concat_channels: no inputs");
  const Shape& first = parts.front().shape();
  std::size_t channels = 0;
  for (const Tensor& t : parts) {
    const Shape& s = t.shape();
    if (s.n != first.n) throw_invalid("concat_channels: " + dim_mismatch("batch", s.n, first.n));
    if (s.h != first.h) throw_invalid("concat_channels: " + dim_mismatch("height", s.h, first.h));
    if (s.w != first.w) throw_invalid("concat_channels: " + dim_mismatch("width", s.w, first.w));
    channels += s.c;
  }
  Tensor out(Shape{first.n, channels, first.h, first.w});
  for (std::size_t n = 0; n < first.n; ++n) {
    std::size_t c0 = 0;
    for (const Tensor& t : parts) {
      for (std::size_t c = 0; c < t.shape().c; ++c) {
        const auto src = t.plane(n, c);
        std::copy(src.begin(), src.end(), out.plane(n, c0 + c).begin());
      }
      c0 += t.shape().c;
    }
  }
  return out;
}

Tensor slice_channels(const Tensor& x, std::size_t begin, std::size_t count) {
  const Shape& s = x.shape();
  if (begin + count > s.c) {
    throw_invalid("slice_channels: range [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                  ") exceeds channel extent " + std::to_string(s.c));
  }
  Tensor out(Shape{s.n, count, s.h, s.w});
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t c = 0; c < count; ++c) {
      const auto src = x.plane(n, begin + c);
      std::copy(src.begin(), src.end(), out.plane(n, c).begin());
    }
  }
  return out;
}

}  // namespace woundcare
