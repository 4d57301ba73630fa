#pragma once

// Scoped flush-to-zero / denormals-are-zero mode for the SSE/AVX unit.
// Shrinking activations during training otherwise drift into the subnormal
// range, where every multiply costs ~100 cycles.

#if defined(__SSE__) || defined(_M_X64)
#include <xmmintrin.h>
#define PWC_HAVE_MXCSR 1
#endif

namespace pwc {

class FlushDenormals {
 public:
#ifdef PWC_HAVE_MXCSR
  FlushDenormals() : saved_(_mm_getcsr()) { _mm_setcsr(saved_ | 0x8040u); }
  ~FlushDenormals() { _mm_setcsr(saved_); }
#else
  FlushDenormals() = default;
#endif
  FlushDenormals(const FlushDenormals&) = delete;
  FlushDenormals& operator=(const FlushDenormals&) = delete;

 private:
#ifdef PWC_HAVE_MXCSR
  unsigned saved_;
#endif
};

}  // namespace pwc
