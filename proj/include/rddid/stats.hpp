#pragma once

#include <boost/math/distributions/normal.hpp>
#include <cmath>

namespace rddid {

inline double normal_quantile(double p) {
    static const boost::math::normal standard;
    return boost::math::quantile(standard, p);
}

inline double normal_cdf(double z) {
    static const boost::math::normal standard;
    return boost::math::cdf(standard, z);
}

/// Two-sided p-value of a standard-normal statistic.
inline double two_sided_p_value(double z) {
    static const boost::math::normal standard;
    return 2.0 * boost::math::cdf(boost::math::complement(standard, std::abs(z)));
}

}  // namespace rddid
