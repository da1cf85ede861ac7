// SPDX-License-Identifier: Apache-2.0
//
// sidelink: multi-RIS 3D sidelink positioning toolkit
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0
// ------------------------------------------------------------------------

// Complex inner loops used by synthesis, the FIM and the estimator.
// A scalar reference implementation is always present; an AVX2+FMA variant
// is selected at first use when the CPU supports it. Setting the environment
// variable SIDELINK_KERNELS=scalar forces the reference path.

#ifndef SIDELINK_KERNELS_HPP
#define SIDELINK_KERNELS_HPP

#include "sidelink/types.hpp"

namespace sidelink::kernels
{
    struct Table
    {
        const char *name;
        cd (*dotu)(const cd *a, const cd *b, long n);                 // sum a[i] b[i]
        cd (*dotc)(const cd *a, const cd *b, long n);                 // sum conj(a[i]) b[i]
        void (*axpy)(cd alpha, const cd *x, cd *y, long n);           // y += alpha x
        void (*mul)(const cd *a, const cd *b, cd *out, long n);       // out = a .* b
    };

    const Table &scalar();
    const Table *avx2(); // nullptr when not compiled in or unsupported by the CPU
    const Table &active();

    // Built on the active table
    inline cd dotu(const cd *a, const cd *b, long n) { return active().dotu(a, b, n); }
    inline cd dotc(const cd *a, const cd *b, long n) { return active().dotc(a, b, n); }
    inline void axpy(cd alpha, const cd *x, cd *y, long n) { active().axpy(alpha, x, y, n); }
    inline void mul(const cd *a, const cd *b, cd *out, long n) { active().mul(a, b, out, n); }

    // y = A^T x for column-major A (rows x cols), no conjugation
    void gemv_t(const CMat &A, const CVec &x, CVec &y);
    // y = A x
    void gemv_n(const CMat &A, const CVec &x, CVec &y);
    // Y += u w^T
    void rank1(CMat &Y, const CVec &u, const CVec &w);
}

#endif
