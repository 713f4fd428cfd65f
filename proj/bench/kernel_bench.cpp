// SPDX-License-Identifier: Apache-2.0
// Serial vs OpenMP kernels on model-sized shapes.
//   kernel_bench [repeats] [threads]
#include <chrono>
#include <cstdlib>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <vector>

#include "finetype/kernels.hpp"
#include "finetype/rng.hpp"

using namespace finetype;
using Clock = std::chrono::steady_clock;

namespace {

std::vector<double> random_vec(std::size_t n, Rng& rng) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

template <class F>
double time_ms(int repeats, F&& f) {
  f();  // warm-up
  const auto t0 = Clock::now();
  for (int i = 0; i < repeats; ++i) f();
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count() / repeats;
}

}  // namespace

int main(int argc, char** argv) {
  const int repeats = argc > 1 ? std::atoi(argv[1]) : 20;
  if (argc > 2) kernels::set_thread_count(std::atoi(argv[2]));
  std::cout << "threads " << kernels::thread_count() << ", repeats " << repeats << "\n";
  std::cout << std::left << std::setw(34) << "kernel / shape (batch x in x out)" << std::right << std::setw(12)
            << "serial ms" << std::setw(12) << "omp ms" << std::setw(10) << "speedup" << std::setw(10) << "equal"
            << "\n";

  Rng rng(1);
  // Mention model layer 1 (3d -> H), the GRU input projection, and the output head.
  const std::vector<kernels::GemmDims> shapes{{100, 900, 768}, {1000, 300, 768}, {1000, 1536, 89}};
  bool all_equal = true;
  for (const auto d : shapes) {
    const auto x = random_vec(d.batch * d.in, rng), w = random_vec(d.in * d.out, rng);
    const auto b = random_vec(d.out, rng), dy = random_vec(d.batch * d.out, rng);
    std::vector<double> y1(d.batch * d.out), y2(d.batch * d.out);
    std::vector<double> dw1(d.in * d.out), dw2(d.in * d.out);
    std::vector<double> dx1(d.batch * d.in), dx2(d.batch * d.in);

    auto row = [&](const char* name, double s, double p, bool eq) {
      std::ostringstream label;
      label << name << " " << d.batch << "x" << d.in << "x" << d.out;
      std::cout << std::left << std::setw(34) << label.str() << std::right << std::fixed << std::setprecision(3)
                << std::setw(12) << s << std::setw(12) << p << std::setw(10) << std::setprecision(2) << s / p
                << std::setw(10) << (eq ? "yes" : "NO") << "\n";
      all_equal = all_equal && eq;
    };

    row("gemm_bias", time_ms(repeats, [&] { kernels::serial::gemm_bias(x, w, b, y1, d); }),
        time_ms(repeats, [&] { kernels::parallel::gemm_bias(x, w, b, y2, d); }), y1 == y2);
    std::fill(dw1.begin(), dw1.end(), 0.0);
    std::fill(dw2.begin(), dw2.end(), 0.0);
    row("gemm_at_b_acc", time_ms(repeats, [&] { kernels::serial::gemm_at_b_acc(x, dy, dw1, d); }),
        time_ms(repeats, [&] { kernels::parallel::gemm_at_b_acc(x, dy, dw2, d); }), dw1 == dw2);
    row("gemm_a_bt", time_ms(repeats, [&] { kernels::serial::gemm_a_bt(dy, w, dx1, d, false); }),
        time_ms(repeats, [&] { kernels::parallel::gemm_a_bt(dy, w, dx2, d, false); }), dx1 == dx2);
  }
  return all_equal ? 0 : 1;
}
