#pragma once

#include <complex>
#include <cstddef>
#include <memory>

namespace speckle::fft {

/// Heap buffer with FFTW alignment.
class Buffer {
 public:
  Buffer() = default;
  explicit Buffer(std::size_t size);
  std::complex<double>* data() { return data_.get(); }
  const std::complex<double>* data() const { return data_.get(); }
  std::size_t size() const { return size_; }
  std::complex<double>& operator[](std::size_t i) { return data_[i]; }
  const std::complex<double>& operator[](std::size_t i) const { return data_[i]; }

 private:
  struct Free {
    void operator()(std::complex<double>* p) const;
  };
  std::unique_ptr<std::complex<double>[], Free> data_;
  std::size_t size_ = 0;
};

/// In-place unnormalized 2D DFT of a row-major rows x cols buffer. Plans are created once per
/// shape under a lock (FFTW_ESTIMATE, so results do not depend on timing) and executed
/// concurrently.
void forward(Buffer& data, int rows, int cols);
void inverse(Buffer& data, int rows, int cols);

}  // namespace speckle::fft
