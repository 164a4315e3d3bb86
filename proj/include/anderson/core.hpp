#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace anderson {

using Index = Eigen::Index;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

// Error hierarchy. Everything the library throws derives from Error so callers
// can catch broadly and still discriminate when they care.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

#define ANDERSON_DEFINE_ERROR(Name)                                                                \
  class Name : public Error {                                                                      \
  public:                                                                                          \
    using Error::Error;                                                                            \
  }

ANDERSON_DEFINE_ERROR(DimensionError);
ANDERSON_DEFINE_ERROR(DegenerateColumn);
ANDERSON_DEFINE_ERROR(RankDeficiency);
ANDERSON_DEFINE_ERROR(EmptyFactorization);
ANDERSON_DEFINE_ERROR(InvalidConstants);
ANDERSON_DEFINE_ERROR(InvalidConfig);
ANDERSON_DEFINE_ERROR(ConvergedSignal);
ANDERSON_DEFINE_ERROR(DegenerateDifference);
ANDERSON_DEFINE_ERROR(ProblemEvaluationError);
ANDERSON_DEFINE_ERROR(InsufficientHistory);
ANDERSON_DEFINE_ERROR(NotContractive);
ANDERSON_DEFINE_ERROR(SingularSystem);
ANDERSON_DEFINE_ERROR(LayoutError);
ANDERSON_DEFINE_ERROR(ComparisonError);
ANDERSON_DEFINE_ERROR(ConfigError);

#undef ANDERSON_DEFINE_ERROR

} // namespace anderson
