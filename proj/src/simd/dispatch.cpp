#include <cstdlib>
#include <string_view>

#include "aspers/simd/kernels.hpp"

namespace aspers::simd {
namespace {

const KernelTable& select() {
  if (const char* env = std::getenv("ASPERS_SIMD");
      env != nullptr && std::string_view(env) == "scalar")
    return scalar_kernels();
  if (const KernelTable* t = avx2_kernels()) return *t;
  if (const KernelTable* t = neon_kernels()) return *t;
  return scalar_kernels();
}

}  // namespace

const KernelTable& active_kernels() {
  static const KernelTable& table = select();
  return table;
}

}  // namespace aspers::simd
