// afd/matrix.hpp -- dense matrix aliases shared across the library.

// Copyright 2026  AFD project authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#ifndef AFD_MATRIX_HPP
#define AFD_MATRIX_HPP

#include <Eigen/Dense>

#include "afd/common.hpp"

namespace afd {

// Row-major everywhere: on-disk formats are row-major f32 and the decoders
// walk rows (time steps).
template <class T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using MatF = Mat<float>;
using MatD = Mat<double>;

template <class T>
bool all_finite(const Mat<T>& m) {
  return m.allFinite();
}

inline void check_same_cols(const MatF& a, const MatF& b, const char* ctx) {
  if (a.cols() != b.cols())
    throw ShapeError(std::string(ctx) + ": column mismatch (" + std::to_string(a.cols()) +
                     " vs " + std::to_string(b.cols()) + ")");
}

}  // namespace afd

#endif  // AFD_MATRIX_HPP
