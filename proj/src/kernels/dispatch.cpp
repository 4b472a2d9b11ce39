#include <cstdlib>
#include <string_view>

#include "sil/kernels.hpp"

namespace sil::kernels {

#ifndef SIL_LAB_HAVE_AVX2
const KernelTable* avx2_table() { return nullptr; }
#endif

bool cpu_supports(Isa isa) {
  switch (isa) {
    case Isa::scalar:
      return true;
    case Isa::avx2:
#if defined(SIL_LAB_HAVE_AVX2) && (defined(__x86_64__) || defined(__i386__))
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
  }
  return false;
}

namespace {

const KernelTable& select() {
  const char* forced = std::getenv("SIL_LAB_ISA");
  if (forced != nullptr && std::string_view(forced) == "scalar") return scalar_table();
  if (cpu_supports(Isa::avx2) && avx2_table() != nullptr) return *avx2_table();
  return scalar_table();
}

}  // namespace

const KernelTable& active() {
  static const KernelTable& table = select();
  return table;
}

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::scalar:
      return "scalar";
    case Isa::avx2:
      return "avx2";
  }
  return "unknown";
}

}  // namespace sil::kernels
