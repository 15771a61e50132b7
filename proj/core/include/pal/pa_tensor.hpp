#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "pal/pa_scalar.hpp"

namespace pal {

// Dense row-major binary32 tensor. Value-like: copies are deep, concurrent
// readers are fine, a tensor must not be mutated while shared.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int64_t> shape);
  Tensor(std::vector<int64_t> shape, std::vector<float> data);
  static Tensor scalar(float v) { return Tensor({}, {v}); }
  static Tensor full(std::vector<int64_t> shape, float v);

  const std::vector<int64_t>& shape() const noexcept { return shape_; }
  int64_t rank() const noexcept { return int64_t(shape_.size()); }
  int64_t size() const noexcept { return int64_t(data_.size()); }
  int64_t dim(int i) const { return shape_.at(size_t(i)); }

  float* data() noexcept { return data_.data(); }
  const float* data() const noexcept { return data_.data(); }
  float& operator[](int64_t i) { return data_[size_t(i)]; }
  float operator[](int64_t i) const { return data_[size_t(i)]; }

  bool domain_error() const noexcept { return domain_error_; }
  void set_domain_error(bool v) noexcept { domain_error_ = v; }

  bool same_shape(const Tensor& o) const noexcept { return shape_ == o.shape_; }

  // Wire format: {rank, dims...} as unsigned 32-bit little-endian integers,
  // then the elements as little-endian binary32.
  void save(std::ostream& os) const;
  static Tensor load(std::istream& is);

 private:
  std::vector<int64_t> shape_;
  std::vector<float> data_;
  bool domain_error_ = false;
};

enum class MatmulMode : uint8_t { Standard, PAM, PAMQuantized };

struct MatmulOptions {
  MatmulMode mode = MatmulMode::PAM;
  PaFormat fmt{};  // operand quantization format for PAMQuantized

  static MatmulOptions standard() { return {MatmulMode::Standard, PaFormat{}}; }
  static MatmulOptions pam() { return {MatmulMode::PAM, PaFormat{}}; }
  static MatmulOptions pam_quantized(const PaFormat& f) {
    return {MatmulMode::PAMQuantized, f};
  }
};

// C[i,j] = sum_k mul(A[i,k], B[k,j]) where mul is the mode's scalar product
// and accumulation is always binary32 addition in ascending-k order.
// PAMQuantized rounds both operands to fmt before each scalar pam.
Tensor matmul(const Tensor& a, const Tensor& b, const MatmulOptions& opt);

// Independent matmul per leading batch index; shapes [b,m,k] x [b,k,n].
Tensor batched_matmul(const Tensor& a, const Tensor& b, const MatmulOptions& opt);

enum class BinaryOp : uint8_t { Pam, Pad, Add, Sub };
enum class UnaryOp : uint8_t { PaExp2, PaLog2, PaExp, PaLog, PaSqrt, Neg, Quantize };

// Elementwise maps. Binary ops broadcast where a dimension is 1 (shapes are
// right-aligned). Per-element domain violations produce NaN and set the
// domain_error flag on the result.
Tensor map_binary(const Tensor& a, const Tensor& b, BinaryOp op);
Tensor map_unary(const Tensor& a, UnaryOp op, const PaFormat& fmt = {});

// Broadcast result shape of a and b, throwing on incompatible shapes.
std::vector<int64_t> broadcast_shape(const std::vector<int64_t>& a,
                                     const std::vector<int64_t>& b);

// Convolution expressed as a matrix product via explicit input unfolding.
// x [c_in, h, w], kernels [c_out, c_in, kh, kw], valid padding, stride 1.
// Helper for small convolutional demos; not used by the transformer stack.
Tensor unfold_image(const Tensor& x, int64_t kh, int64_t kw);
Tensor conv2d_via_matmul(const Tensor& x, const Tensor& kernels,
                         const MatmulOptions& opt);

std::string shape_str(const std::vector<int64_t>& shape);

}  // namespace pal
