// SPDX-License-Identifier: Apache-2.0
//
// sidelink: multi-RIS 3D sidelink positioning toolkit
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0
// ------------------------------------------------------------------------

#include "sidelink/kernels.hpp"
#include <cstdlib>
#include <cstring>

namespace sidelink::kernels
{
#if defined(SIDELINK_WITH_AVX2)
    extern const Table kAvx2Table;
#endif

    const Table *avx2()
    {
#if defined(SIDELINK_WITH_AVX2)
        static const bool ok = __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
        return ok ? &kAvx2Table : nullptr;
#else
        return nullptr;
#endif
    }

    const Table &active()
    {
        static const Table *t = []
        {
            const char *env = std::getenv("SIDELINK_KERNELS");
            if (env && std::strcmp(env, "scalar") == 0)
                return &scalar();
            const Table *v = avx2();
            return v ? v : &scalar();
        }();
        return *t;
    }

    void gemv_t(const CMat &A, const CVec &x, CVec &y)
    {
        const long rows = A.rows(), cols = A.cols();
        if (x.size() != rows)
            throw ConfigError("gemv_t: dimension mismatch");
        y.resize(cols);
        const Table &t = active();
        for (long c = 0; c < cols; ++c)
            y[c] = t.dotu(A.data() + c * rows, x.data(), rows);
    }

    void gemv_n(const CMat &A, const CVec &x, CVec &y)
    {
        const long rows = A.rows(), cols = A.cols();
        if (x.size() != cols)
            throw ConfigError("gemv_n: dimension mismatch");
        y.setZero(rows);
        const Table &t = active();
        for (long c = 0; c < cols; ++c)
            t.axpy(x[c], A.data() + c * rows, y.data(), rows);
    }

    void rank1(CMat &Y, const CVec &u, const CVec &w)
    {
        if (Y.rows() != u.size() || Y.cols() != w.size())
            throw ConfigError("rank1: dimension mismatch");
        const Table &t = active();
        const long rows = Y.rows();
        for (long c = 0; c < Y.cols(); ++c)
            t.axpy(w[c], u.data(), Y.data() + c * rows, rows);
    }
}
