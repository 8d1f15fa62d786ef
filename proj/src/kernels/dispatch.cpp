#include <atomic>
#include <string>

#include "ncd/core.hpp"
#include "ncd/kernels.hpp"

namespace ncd::kernels {
namespace {

bool cpu_has_avx2() {
#if defined(__x86_64__) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const KernelTable* detect() {
  if (avx2_table() != nullptr && cpu_has_avx2()) return avx2_table();
  return &scalar_table();
}

std::atomic<const KernelTable*>& current() {
  static std::atomic<const KernelTable*> table{detect()};
  return table;
}

}  // namespace

bool isa_supported(Isa isa) {
  switch (isa) {
    case Isa::scalar: return true;
    case Isa::avx2: return avx2_table() != nullptr && cpu_has_avx2();
  }
  return false;
}

const KernelTable& active() { return *current().load(std::memory_order_acquire); }

Isa active_isa() { return active().isa; }

void select_isa(Isa isa) {
  if (!isa_supported(isa)) throw Error("instruction set '" + std::string(to_string(isa)) + "' is not supported here");
  current().store(isa == Isa::avx2 ? avx2_table() : &scalar_table(), std::memory_order_release);
}

std::string_view to_string(Isa isa) { return isa == Isa::avx2 ? "avx2" : "scalar"; }

Isa isa_from_string(std::string_view s) {
  if (s == "scalar") return Isa::scalar;
  if (s == "avx2") return Isa::avx2;
  throw ConfigError("unknown instruction set '" + std::string(s) + "'");
}

}  // namespace ncd::kernels
