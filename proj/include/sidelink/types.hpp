// SPDX-License-Identifier: Apache-2.0
//
// sidelink: multi-RIS 3D sidelink positioning toolkit
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0
// ------------------------------------------------------------------------

#ifndef SIDELINK_TYPES_HPP
#define SIDELINK_TYPES_HPP

#include <Eigen/Dense>
#include <complex>
#include <stdexcept>
#include <string>

namespace sidelink
{
    using cd = std::complex<double>;
    using Vec3 = Eigen::Vector3d;
    using Mat3 = Eigen::Matrix3d;
    using RVec = Eigen::VectorXd;
    using RMat = Eigen::MatrixXd;
    using CVec = Eigen::VectorXcd;
    using CMat = Eigen::MatrixXcd;

    inline constexpr double kSpeedOfLight = 299792458.0;
    inline constexpr double kPi = 3.14159265358979323846;

    // Raised for degenerate geometry (coincident points, zero-length segments)
    struct DomainError : std::domain_error
    {
        using std::domain_error::domain_error;
    };

    // Raised for bad dimensions, divisibility and configuration problems
    struct ConfigError : std::invalid_argument
    {
        using std::invalid_argument::invalid_argument;
    };

    inline double dbm_to_watt(double dbm) { return std::pow(10.0, (dbm - 30.0) / 10.0); }
    inline double watt_to_dbm(double w) { return 10.0 * std::log10(w) + 30.0; }
    inline double db_to_lin(double db) { return std::pow(10.0, db / 10.0); }
}

#endif
