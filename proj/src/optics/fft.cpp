#include "speckle/fft.hpp"

#include <map>
#include <mutex>
#include <new>
#include <tuple>

#include <fftw3.h>

namespace speckle::fft {

void Buffer::Free::operator()(std::complex<double>* p) const { fftw_free(p); }

Buffer::Buffer(std::size_t size) : size_(size) {
  auto* raw = static_cast<std::complex<double>*>(fftw_malloc(sizeof(std::complex<double>) * size));
  if (raw == nullptr) throw std::bad_alloc();
  data_.reset(raw);
}

namespace {

std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

fftw_plan plan_for(int rows, int cols, int sign) {
  static std::map<std::tuple<int, int, int>, fftw_plan> plans;
  std::lock_guard lock(planner_mutex());
  const auto key = std::make_tuple(rows, cols, sign);
  if (auto it = plans.find(key); it != plans.end()) return it->second;
  Buffer scratch(static_cast<std::size_t>(rows) * cols);
  auto* ptr = reinterpret_cast<fftw_complex*>(scratch.data());
  fftw_plan plan = fftw_plan_dft_2d(rows, cols, ptr, ptr, sign, FFTW_ESTIMATE);
  plans.emplace(key, plan);
  return plan;
}

void run(Buffer& data, int rows, int cols, int sign) {
  fftw_plan plan = plan_for(rows, cols, sign);
  auto* ptr = reinterpret_cast<fftw_complex*>(data.data());
  fftw_execute_dft(plan, ptr, ptr);
}

}  // namespace

void forward(Buffer& data, int rows, int cols) { run(data, rows, cols, FFTW_FORWARD); }
void inverse(Buffer& data, int rows, int cols) { run(data, rows, cols, FFTW_BACKWARD); }

}  // namespace speckle::fft
