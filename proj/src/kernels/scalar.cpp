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

namespace sidelink::kernels
{
    namespace
    {
        // Written on split real/imag parts so the compiler does not insert
        // the NaN-recovery path of std::complex multiplication.
        cd s_dotu(const cd *a, const cd *b, long n)
        {
            double re = 0.0, im = 0.0;
            for (long i = 0; i < n; ++i)
            {
                const double ar = a[i].real(), ai = a[i].imag(), br = b[i].real(), bi = b[i].imag();
                re += ar * br - ai * bi;
                im += ar * bi + ai * br;
            }
            return {re, im};
        }

        cd s_dotc(const cd *a, const cd *b, long n)
        {
            double re = 0.0, im = 0.0;
            for (long i = 0; i < n; ++i)
            {
                const double ar = a[i].real(), ai = a[i].imag(), br = b[i].real(), bi = b[i].imag();
                re += ar * br + ai * bi;
                im += ar * bi - ai * br;
            }
            return {re, im};
        }

        void s_axpy(cd alpha, const cd *x, cd *y, long n)
        {
            const double ar = alpha.real(), ai = alpha.imag();
            for (long i = 0; i < n; ++i)
            {
                const double xr = x[i].real(), xi = x[i].imag();
                y[i] = cd(y[i].real() + ar * xr - ai * xi, y[i].imag() + ar * xi + ai * xr);
            }
        }

        void s_mul(const cd *a, const cd *b, cd *out, long n)
        {
            for (long i = 0; i < n; ++i)
            {
                const double ar = a[i].real(), ai = a[i].imag(), br = b[i].real(), bi = b[i].imag();
                out[i] = cd(ar * br - ai * bi, ar * bi + ai * br);
            }
        }

        const Table kScalar{"scalar", s_dotu, s_dotc, s_axpy, s_mul};
    }

    const Table &scalar() { return kScalar; }
}
