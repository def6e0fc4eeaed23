#include <cstdlib>
#include <string_view>

#include "authaudit/kernels.hpp"

namespace authaudit::kernels {

#if defined(AUTHAUDIT_WITH_AVX2)
const KernelTable& avx2_table();
#endif

const KernelTable* avx2() {
#if defined(AUTHAUDIT_WITH_AVX2)
  static const bool supported = __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  return supported ? &avx2_table() : nullptr;
#else
  return nullptr;
#endif
}

const KernelTable& active() {
  static const KernelTable& chosen = [] () -> const KernelTable& {
    if (const char* forced = std::getenv("AUTHAUDIT_KERNELS");
        forced != nullptr && std::string_view(forced) == "scalar") {
      return scalar();
    }
    if (const KernelTable* fast = avx2()) return *fast;
    return scalar();
  }();
  return chosen;
}

}  // namespace authaudit::kernels
