#include "hetnet/efficiency.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <chrono>
#include <iostream>
#include <sstream>
#include <thread>

namespace hetnet {

std::string EfficiencyReport::csv_header() {
  return "method,input_size,params_m,flops_gmac,fps,warmup_iters,timed_iters,device";
}

std::string EfficiencyReport::csv_row(const std::string& label) const {
  std::ostringstream os;
  os << label << "," << input_h << "x" << input_w << "," << params_millions << "," << flops_gmac
     << "," << fps << "," << warmup_iters << "," << timed_iters << "," << device;
  return os.str();
}

std::int64_t count_params(HetNet& net) { return net.num_trainable_params(); }

std::int64_t count_macs(const HetNet& net, std::int64_t h, std::int64_t w) {
  if (h % 32 != 0 || w % 32 != 0)
    throw InputError("count_macs: input size must be divisible by 32");
  return net.describe(h, w).total_macs();
}

namespace {

class ScopedFileLock {
 public:
  explicit ScopedFileLock(const std::string& path) {
    if (path.empty()) return;
    fd_ = ::open(path.c_str(), O_CREAT | O_RDWR, 0666);
    if (fd_ >= 0) ::flock(fd_, LOCK_EX);
  }
  ~ScopedFileLock() {
    if (fd_ >= 0) {
      ::flock(fd_, LOCK_UN);
      ::close(fd_);
    }
  }

 private:
  int fd_ = -1;
};

}  // namespace

double benchmark_fps(HetNet& net, std::int64_t h, std::int64_t w, const BenchOptions& opts) {
  if (opts.timed_iters < 1) throw InputError("benchmark_fps: timed_iters must be >= 1");
  ScopedFileLock lock(opts.lock_file);
  net.set_train(false);
  std::mt19937 rng(opts.seed);
  std::normal_distribution<double> dist(0.0, 1.0);
  Tensor input(1, 3, h, w);
  for (std::int64_t i = 0; i < input.numel(); ++i) input.data()[i] = dist(rng);
  Variable x(input);
  NoGradGuard guard;
  for (int i = 0; i < opts.warmup_iters; ++i) net.run(x);
  const auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < opts.timed_iters; ++i) net.run(x);
  const auto t1 = std::chrono::steady_clock::now();
  const double elapsed = std::chrono::duration<double>(t1 - t0).count();
  const double per_iter = elapsed / static_cast<double>(opts.timed_iters);
  const double resolution =
      static_cast<double>(std::chrono::steady_clock::period::num) /
      static_cast<double>(std::chrono::steady_clock::period::den);
  if (per_iter < 100.0 * resolution)
    std::cerr << "[bench] warning: per-iteration time " << per_iter
              << "s is close to the timer resolution; increase timed_iters\n";
  return 1.0 / per_iter;
}

EfficiencyReport profile(HetNet& net, std::int64_t h, std::int64_t w, const BenchOptions& opts) {
  EfficiencyReport r;
  r.params_millions = static_cast<double>(count_params(net)) / 1e6;
  r.flops_gmac = static_cast<double>(count_macs(net, h, w)) / 1e9;
  r.fps = benchmark_fps(net, h, w, opts);
  r.input_h = h;
  r.input_w = w;
  r.warmup_iters = opts.warmup_iters;
  r.timed_iters = opts.timed_iters;
  std::ostringstream dev;
  dev << "cpu (" << std::thread::hardware_concurrency() << " threads)";
  r.device = dev.str();
  return r;
}

std::string format_layer_table(const LayerTable& table) {
  std::ostringstream os;
  os << "layer                                                kind          output           "
        "params       macs\n";
  char buf[256];
  for (const auto& r : table.rows) {
    std::snprintf(buf, sizeof(buf), "%-52s %-13s %-16s %10lld %10lld\n", r.name.c_str(),
                  r.kind.c_str(), r.out.str().c_str(), static_cast<long long>(r.params),
                  static_cast<long long>(r.macs));
    os << buf;
  }
  std::snprintf(buf, sizeof(buf), "total params: %lld (%.2fM)  total macs: %lld (%.2f GMac)\n",
                static_cast<long long>(table.total_params()),
                static_cast<double>(table.total_params()) / 1e6,
                static_cast<long long>(table.total_macs()),
                static_cast<double>(table.total_macs()) / 1e9);
  os << buf;
  return os.str();
}

}  // namespace hetnet
