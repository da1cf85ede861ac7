// SPDX-License-Identifier: Apache-2.0
//
// sidelink: multi-RIS 3D sidelink positioning toolkit
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0
// ------------------------------------------------------------------------

// AVX2 + FMA variants. Two complex doubles per 256-bit register, laid out
// [re0, im0, re1, im1]. Compiled with -mavx2 -mfma; only called after a
// runtime cpuid check.

#include "sidelink/kernels.hpp"
#include <immintrin.h>

namespace sidelink::kernels
{
    namespace
    {
        inline __m256d load2(const cd *p) { return _mm256_loadu_pd(reinterpret_cast<const double *>(p)); }
        inline void store2(cd *p, __m256d v) { _mm256_storeu_pd(reinterpret_cast<double *>(p), v); }

        // a * b for two complex pairs
        inline __m256d cmul(__m256d a, __m256d b)
        {
            const __m256d br = _mm256_movedup_pd(b);       // [br0 br0 br1 br1]
            const __m256d bi = _mm256_permute_pd(b, 0xF);  // [bi0 bi0 bi1 bi1]
            const __m256d as = _mm256_permute_pd(a, 0x5);  // [ai0 ar0 ai1 ar1]
            return _mm256_fmaddsub_pd(a, br, _mm256_mul_pd(as, bi));
        }

        inline cd hsum(__m256d v)
        {
            const __m128d lo = _mm256_castpd256_pd128(v), hi = _mm256_extractf128_pd(v, 1);
            const __m128d s = _mm_add_pd(lo, hi);
            double out[2];
            _mm_storeu_pd(out, s);
            return {out[0], out[1]};
        }

        cd v_dotu(const cd *a, const cd *b, long n)
        {
            // accumulate a*br and a_swapped*bi separately, combine once at the end
            __m256d acc1 = _mm256_setzero_pd(), acc2 = _mm256_setzero_pd();
            long i = 0;
            for (; i + 2 <= n; i += 2)
            {
                const __m256d va = load2(a + i), vb = load2(b + i);
                acc1 = _mm256_fmadd_pd(va, _mm256_movedup_pd(vb), acc1);
                acc2 = _mm256_fmadd_pd(_mm256_permute_pd(va, 0x5), _mm256_permute_pd(vb, 0xF), acc2);
            }
            cd r = hsum(_mm256_addsub_pd(acc1, acc2));
            for (; i < n; ++i)
                r += cd(a[i].real() * b[i].real() - a[i].imag() * b[i].imag(),
                        a[i].real() * b[i].imag() + a[i].imag() * b[i].real());
            return r;
        }

        cd v_dotc(const cd *a, const cd *b, long n)
        {
            // conj(a) b = b * conj(a): b*ar + sign-flipped (b_swapped*ai)
            __m256d acc1 = _mm256_setzero_pd(), acc2 = _mm256_setzero_pd();
            long i = 0;
            for (; i + 2 <= n; i += 2)
            {
                const __m256d va = load2(a + i), vb = load2(b + i);
                acc1 = _mm256_fmadd_pd(vb, _mm256_movedup_pd(va), acc1);
                acc2 = _mm256_fmadd_pd(_mm256_permute_pd(vb, 0x5), _mm256_permute_pd(va, 0xF), acc2);
            }
            // real lanes add acc2, imaginary lanes subtract it
            const __m256d flip = _mm256_set_pd(-0.0, 0.0, -0.0, 0.0);
            cd r = hsum(_mm256_add_pd(acc1, _mm256_xor_pd(acc2, flip)));
            for (; i < n; ++i)
                r += cd(a[i].real() * b[i].real() + a[i].imag() * b[i].imag(),
                        a[i].real() * b[i].imag() - a[i].imag() * b[i].real());
            return r;
        }

        void v_axpy(cd alpha, const cd *x, cd *y, long n)
        {
            const __m256d al = _mm256_set_pd(alpha.imag(), alpha.real(), alpha.imag(), alpha.real());
            long i = 0;
            for (; i + 2 <= n; i += 2)
                store2(y + i, _mm256_add_pd(load2(y + i), cmul(load2(x + i), al)));
            for (; i < n; ++i)
                y[i] += cd(alpha.real() * x[i].real() - alpha.imag() * x[i].imag(),
                           alpha.real() * x[i].imag() + alpha.imag() * x[i].real());
        }

        void v_mul(const cd *a, const cd *b, cd *out, long n)
        {
            long i = 0;
            for (; i + 2 <= n; i += 2)
                store2(out + i, cmul(load2(a + i), load2(b + i)));
            for (; i < n; ++i)
                out[i] = cd(a[i].real() * b[i].real() - a[i].imag() * b[i].imag(),
                            a[i].real() * b[i].imag() + a[i].imag() * b[i].real());
        }
    }

    extern const Table kAvx2Table;
    const Table kAvx2Table{"avx2", v_dotu, v_dotc, v_axpy, v_mul};
}
