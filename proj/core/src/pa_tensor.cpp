#include "pal/pa_tensor.hpp"

#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "pal/ops_audit.hpp"

namespace pal {

namespace {

int64_t shape_product(const std::vector<int64_t>& shape) {
  int64_t n = 1;
  for (int64_t d : shape) {
    if (d < 0) throw std::invalid_argument("negative tensor dimension");
    n *= d;
  }
  return n;
}

void write_u32(std::ostream& os, uint32_t v) {
  char b[4] = {char(v & 0xFF), char((v >> 8) & 0xFF), char((v >> 16) & 0xFF),
               char((v >> 24) & 0xFF)};
  os.write(b, 4);
}

uint32_t read_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw std::runtime_error("tensor payload truncated");
  return uint32_t(b[0]) | (uint32_t(b[1]) << 8) | (uint32_t(b[2]) << 16) |
         (uint32_t(b[3]) << 24);
}

}  // namespace

Tensor::Tensor(std::vector<int64_t> shape)
    : shape_(std::move(shape)), data_(size_t(shape_product(shape_)), 0.0f) {}

Tensor::Tensor(std::vector<int64_t> shape, std::vector<float> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (int64_t(data_.size()) != shape_product(shape_))
    throw std::invalid_argument("tensor data length does not match shape");
}

Tensor Tensor::full(std::vector<int64_t> shape, float v) {
  Tensor t(std::move(shape));
  for (auto& x : t.data_) x = v;
  return t;
}

void Tensor::save(std::ostream& os) const {
  write_u32(os, uint32_t(shape_.size()));
  for (int64_t d : shape_) write_u32(os, uint32_t(d));
  for (float x : data_) write_u32(os, float_bits(x));
}

Tensor Tensor::load(std::istream& is) {
  uint32_t rank = read_u32(is);
  if (rank > 8) throw std::runtime_error("tensor rank implausibly large");
  std::vector<int64_t> shape(rank);
  for (auto& d : shape) d = int64_t(read_u32(is));
  Tensor t(std::move(shape));
  for (int64_t i = 0; i < t.size(); ++i) t[i] = bits_to_float(read_u32(is));
  return t;
}

std::string shape_str(const std::vector<int64_t>& shape) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << "]";
  return os.str();
}

namespace {

// One row-times-column product accumulated left to right. The scalar product
// is selected once per kernel call, not per element.
template <typename Mul>
void matmul_2d(const float* a, const float* b, float* c, int64_t m, int64_t k,
               int64_t n, Mul mul) {
  // B is walked column-wise; transpose it once so the reduction is contiguous.
  std::vector<float> bt(size_t(k * n));
  for (int64_t kk = 0; kk < k; ++kk)
    for (int64_t j = 0; j < n; ++j) bt[size_t(j * k + kk)] = b[size_t(kk * n + j)];
  for (int64_t i = 0; i < m; ++i) {
    const float* arow = a + i * k;
    for (int64_t j = 0; j < n; ++j) {
      const float* bcol = bt.data() + j * k;
      float acc = 0.0f;
      for (int64_t kk = 0; kk < k; ++kk) acc += mul(arow[kk], bcol[kk]);
      c[i * n + j] = acc;
    }
  }
}

void matmul_dispatch(const float* a, const float* b, float* c, int64_t m, int64_t k,
                     int64_t n, const MatmulOptions& opt) {
  switch (opt.mode) {
    case MatmulMode::Standard:
      matmul_2d(a, b, c, m, k, n, [](float x, float y) { return audit::mul(x, y); });
      return;
    case MatmulMode::PAM:
      matmul_2d(a, b, c, m, k, n, [](float x, float y) { return pam_int_add(x, y); });
      return;
    case MatmulMode::PAMQuantized: {
      // quantize_mantissa is idempotent and elementwise, so rounding whole
      // operands up front equals rounding before each scalar pam.
      std::vector<float> qa(size_t(m * k)), qb(size_t(k * n));
      for (int64_t i = 0; i < m * k; ++i) qa[size_t(i)] = quantize_mantissa(a[i], opt.fmt);
      for (int64_t i = 0; i < k * n; ++i) qb[size_t(i)] = quantize_mantissa(b[i], opt.fmt);
      matmul_2d(qa.data(), qb.data(), c, m, k, n,
                [](float x, float y) { return pam_int_add(x, y); });
      return;
    }
  }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b, const MatmulOptions& opt) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
    throw std::invalid_argument("matmul: shape mismatch " + shape_str(a.shape()) +
                                " x " + shape_str(b.shape()));
  Tensor c({a.dim(0), b.dim(1)});
  matmul_dispatch(a.data(), b.data(), c.data(), a.dim(0), a.dim(1), b.dim(1), opt);
  return c;
}

Tensor batched_matmul(const Tensor& a, const Tensor& b, const MatmulOptions& opt) {
  if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0) || a.dim(2) != b.dim(1))
    throw std::invalid_argument("batched_matmul: shape mismatch " +
                                shape_str(a.shape()) + " x " + shape_str(b.shape()));
  int64_t nb = a.dim(0), m = a.dim(1), k = a.dim(2), n = b.dim(2);
  Tensor c({nb, m, n});
  for (int64_t i = 0; i < nb; ++i)
    matmul_dispatch(a.data() + i * m * k, b.data() + i * k * n, c.data() + i * m * n,
                    m, k, n, opt);
  return c;
}

std::vector<int64_t> broadcast_shape(const std::vector<int64_t>& a,
                                     const std::vector<int64_t>& b) {
  size_t rank = std::max(a.size(), b.size());
  std::vector<int64_t> out(rank);
  for (size_t i = 0; i < rank; ++i) {
    int64_t da = i < rank - a.size() ? 1 : a[i - (rank - a.size())];
    int64_t db = i < rank - b.size() ? 1 : b[i - (rank - b.size())];
    if (da != db && da != 1 && db != 1)
      throw std::invalid_argument("broadcast: incompatible shapes " + shape_str(a) +
                                  " vs " + shape_str(b));
    out[i] = std::max(da, db);
  }
  return out;
}

namespace {

// Row-major strides with 0 for broadcast dimensions, right-aligned to `rank`.
std::vector<int64_t> broadcast_strides(const std::vector<int64_t>& shape, size_t rank,
                                       const std::vector<int64_t>& out_shape) {
  std::vector<int64_t> strides(rank, 0);
  int64_t s = 1;
  for (size_t i = shape.size(); i-- > 0;) {
    size_t oi = i + (rank - shape.size());
    strides[oi] = (shape[i] == 1 && out_shape[oi] != 1) ? 0 : s;
    s *= shape[i];
  }
  return strides;
}

}  // namespace

Tensor map_binary(const Tensor& a, const Tensor& b, BinaryOp op) {
  auto out_shape = broadcast_shape(a.shape(), b.shape());
  Tensor out(out_shape);
  size_t rank = out_shape.size();
  auto sa = broadcast_strides(a.shape(), rank, out_shape);
  auto sb = broadcast_strides(b.shape(), rank, out_shape);
  std::vector<int64_t> idx(rank, 0);
  bool err = false;
  for (int64_t flat = 0; flat < out.size(); ++flat) {
    int64_t ia = 0, ib = 0;
    for (size_t d = 0; d < rank; ++d) {
      ia += idx[d] * sa[d];
      ib += idx[d] * sb[d];
    }
    float x = a[ia], y = b[ib];
    float r = 0.0f;
    switch (op) {
      case BinaryOp::Pam: r = pam_int_add(x, y); break;
      case BinaryOp::Pad:
        if ((x == 0.0f && y == 0.0f) || std::isinf(x) || std::isinf(y)) err = true;
        r = pad(x, y);
        break;
      case BinaryOp::Add: r = x + y; break;
      case BinaryOp::Sub: r = x - y; break;
    }
    out[flat] = r;
    for (size_t d = rank; d-- > 0;) {
      if (++idx[d] < out_shape[d]) break;
      idx[d] = 0;
    }
  }
  out.set_domain_error(err || a.domain_error() || b.domain_error());
  return out;
}

Tensor unfold_image(const Tensor& x, int64_t kh, int64_t kw) {
  if (x.rank() != 3) throw std::invalid_argument("unfold_image: expected [c,h,w]");
  int64_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  if (kh < 1 || kw < 1 || kh > h || kw > w)
    throw std::invalid_argument("unfold_image: kernel larger than image");
  int64_t oh = h - kh + 1, ow = w - kw + 1;
  // Rows are output positions, columns the receptive field laid out
  // channel-major to match a [c_out, c*kh*kw] kernel matrix.
  Tensor out({oh * ow, c * kh * kw});
  for (int64_t oy = 0; oy < oh; ++oy)
    for (int64_t ox = 0; ox < ow; ++ox) {
      int64_t row = oy * ow + ox;
      int64_t col = 0;
      for (int64_t cc = 0; cc < c; ++cc)
        for (int64_t ky = 0; ky < kh; ++ky)
          for (int64_t kx = 0; kx < kw; ++kx)
            out[row * (c * kh * kw) + col++] = x[(cc * h + oy + ky) * w + ox + kx];
    }
  return out;
}

Tensor conv2d_via_matmul(const Tensor& x, const Tensor& kernels,
                         const MatmulOptions& opt) {
  if (kernels.rank() != 4 || x.rank() != 3 || kernels.dim(1) != x.dim(0))
    throw std::invalid_argument("conv2d_via_matmul: shape mismatch");
  int64_t c_out = kernels.dim(0), c_in = kernels.dim(1);
  int64_t kh = kernels.dim(2), kw = kernels.dim(3);
  int64_t oh = x.dim(1) - kh + 1, ow = x.dim(2) - kw + 1;
  Tensor cols = unfold_image(x, kh, kw);          // [oh*ow, c_in*kh*kw]
  Tensor kmat({c_in * kh * kw, c_out});
  for (int64_t o = 0; o < c_out; ++o)
    for (int64_t i = 0; i < c_in * kh * kw; ++i)
      kmat[i * c_out + o] = kernels[o * c_in * kh * kw + i];
  Tensor prod = matmul(cols, kmat, opt);          // [oh*ow, c_out]
  Tensor out({c_out, oh, ow});
  for (int64_t o = 0; o < c_out; ++o)
    for (int64_t p = 0; p < oh * ow; ++p) out[o * oh * ow + p] = prod[p * c_out + o];
  return out;
}

Tensor map_unary(const Tensor& a, UnaryOp op, const PaFormat& fmt) {
  Tensor out(a.shape());
  bool err = false;
  auto positive_normal = [](float x) { return is_normal(x) && x > 0.0f; };
  for (int64_t i = 0; i < a.size(); ++i) {
    float x = a[i];
    float r = 0.0f;
    switch (op) {
      case UnaryOp::PaExp2: r = paexp2(x, fmt); break;
      case UnaryOp::PaLog2:
        if (!positive_normal(x)) err = true;
        r = palog2(x);
        break;
      case UnaryOp::PaExp: r = paexp(x); break;
      case UnaryOp::PaLog:
        if (!positive_normal(x)) err = true;
        r = palog(x);
        break;
      case UnaryOp::PaSqrt:
        if (!positive_normal(x)) err = true;
        r = pasqrt(x);
        break;
      case UnaryOp::Neg: r = -x; break;
      case UnaryOp::Quantize: r = quantize_mantissa(x, fmt); break;
    }
    out[i] = r;
  }
  out.set_domain_error(err || a.domain_error());
  return out;
}

}  // namespace pal
