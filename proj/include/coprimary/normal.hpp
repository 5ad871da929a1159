#ifndef COPRIMARY_NORMAL_HPP
#define COPRIMARY_NORMAL_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace coprimary::normal
{

inline double pdf(double x)
{
    return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

inline double cdf(double x)
{
    return 0.5 * std::erfc(-x / std::numbers::sqrt2);
}

/// Inverse standard normal CDF (Wichura's AS 241, PPND16; ~1e-16 relative accuracy).
inline double quantile(double p)
{
    if (p <= 0.0)
    {
        return -std::numeric_limits<double>::infinity();
    }
    if (p >= 1.0)
    {
        return std::numeric_limits<double>::infinity();
    }
    const double q = p - 0.5;
    double val;
    if (std::fabs(q) <= 0.425)
    {
        const double r = 0.180625 - q * q;
        val = q *
              (((((((r * 2509.0809287301226727 + 33430.575583588128105) * r + 67265.770927008700853) * r +
                   45921.953931549871457) * r + 13731.693765509461125) * r + 1971.5909503065514427) * r +
                133.14166789178437745) * r + 3.387132872796366608) /
              (((((((r * 5226.495278852545925 + 28729.085735721942674) * r + 39307.89580009271061) * r +
                   21213.794301586595867) * r + 5394.1960214247511077) * r + 687.1870074920579083) * r +
                42.313330701600911252) * r + 1.0);
        return val;
    }
    double r = q < 0 ? p : 1.0 - p;
    r = std::sqrt(-std::log(r));
    if (r <= 5.0)
    {
        r -= 1.6;
        val = (((((((r * 7.7454501427834140764e-4 + .0227238449892691845833) * r + .24178072517745061177) * r +
                   1.27045825245236838258) * r + 3.64784832476320460504) * r + 5.7694972214606914055) * r +
                4.6303378461565452959) * r + 1.42343711074968357734) /
              (((((((r * 1.05075007164441684324e-9 + 5.475938084995344946e-4) * r + .0151986665636164571966) * r +
                   .14810397642748007459) * r + .68976733498510000455) * r + 1.6763848301838038494) * r +
                2.05319162663775882187) * r + 1.0);
    }
    else
    {
        r -= 5.0;
        val = (((((((r * 2.01033439929228813265e-7 + 2.71155556874348757815e-5) * r + .0012426609473880784386) * r +
                   .026532189526576123093) * r + .29656057182850489123) * r + 1.7848265399172913358) * r +
                5.4637849111641143699) * r + 6.6579046435011037772) /
              (((((((r * 2.04426310338993978564e-15 + 1.4215117583164458887e-7) * r + 1.8463183175100546818e-5) * r +
                   7.868691311456132591e-4) * r + .0148753612908506148525) * r + .13692988092273580531) * r +
                .59983220655588793769) * r + 1.0);
    }
    return q < 0.0 ? -val : val;
}

/// Bivariate normal density with unit variances and correlation r.
inline double bivariate_pdf(double x, double y, double r)
{
    const double s = 1.0 - r * r;
    return std::exp(-(x * x - 2.0 * r * x * y + y * y) / (2.0 * s)) / (2.0 * std::numbers::pi * std::sqrt(s));
}

/// Upper orthant probability P(X > h, Y > k) for a standard bivariate normal with correlation r.
/// Genz (2004) refinement of the Drezner-Wesolowsky method; absolute accuracy ~1e-15.
inline double bivariate_upper(double h, double k, double r)
{
    static constexpr double x6[3] = {-0.9324695142031522, -0.6612093864662647, -0.2386191860831970};
    static constexpr double w6[3] = {0.1713244923791705, 0.3607615730481384, 0.4679139345726904};
    static constexpr double x12[6] = {-0.9815606342467191, -0.9041172563704750, -0.7699026741943050,
                                      -0.5873179542866171, -0.3678314989981802, -0.1252334085114692};
    static constexpr double w12[6] = {0.04717533638651177, 0.1069393259953183, 0.1600783285433464,
                                      0.2031674267230659, 0.2334925365383547, 0.2491470458134029};
    static constexpr double x20[10] = {-0.9931285991850949, -0.9639719272779138, -0.9122344282513259,
                                       -0.8391169718222188, -0.7463319064601508, -0.6360536807265150,
                                       -0.5108670019508271, -0.3737060887154196, -0.2277858511416451,
                                       -0.07652652113349733};
    static constexpr double w20[10] = {0.01761400713915212, 0.04060142980038694, 0.06267204833410906,
                                       0.08327674157670475, 0.1019301198172404, 0.1181945319615184,
                                       0.1316886384491766, 0.1420961093183821, 0.1491729864726037,
                                       0.1527533871307259};
    constexpr double two_pi = 2.0 * std::numbers::pi;

    if (std::isinf(h) || std::isinf(k))
    {
        if (h == -std::numeric_limits<double>::infinity())
        {
            return cdf(-k);
        }
        if (k == -std::numeric_limits<double>::infinity())
        {
            return cdf(-h);
        }
        return 0.0;
    }

    const double* x;
    const double* w;
    int lg;
    const double ar = std::fabs(r);
    if (ar < 0.3)
    {
        x = x6;
        w = w6;
        lg = 3;
    }
    else if (ar < 0.75)
    {
        x = x12;
        w = w12;
        lg = 6;
    }
    else
    {
        x = x20;
        w = w20;
        lg = 10;
    }

    double hk = h * k;
    double bvn = 0.0;
    if (ar < 0.925)
    {
        const double hs = (h * h + k * k) / 2.0;
        const double asr = std::asin(r);
        for (int i = 0; i < lg; ++i)
        {
            double sn = std::sin(asr * (x[i] + 1.0) / 2.0);
            bvn += w[i] * std::exp((sn * hk - hs) / (1.0 - sn * sn));
            sn = std::sin(asr * (-x[i] + 1.0) / 2.0);
            bvn += w[i] * std::exp((sn * hk - hs) / (1.0 - sn * sn));
        }
        return std::clamp(bvn * asr / (2.0 * two_pi) + cdf(-h) * cdf(-k), 0.0, 1.0);
    }

    if (r < 0.0)
    {
        k = -k;
        hk = -hk;
    }
    if (ar < 1.0)
    {
        const double as = (1.0 - r) * (1.0 + r);
        double a = std::sqrt(as);
        const double bs = (h - k) * (h - k);
        const double c = (4.0 - hk) / 8.0;
        const double d = (12.0 - hk) / 16.0;
        bvn = a * std::exp(-(bs / as + hk) / 2.0) * (1.0 - c * (bs - as) * (1.0 - d * bs / 5.0) / 3.0 + c * d * as * as / 5.0);
        if (hk > -160.0)
        {
            const double b = std::sqrt(bs);
            bvn -= std::exp(-hk / 2.0) * std::sqrt(two_pi) * cdf(-b / a) * b * (1.0 - c * bs * (1.0 - d * bs / 5.0) / 3.0);
        }
        a /= 2.0;
        for (int i = 0; i < lg; ++i)
        {
            double xs = (a * (x[i] + 1.0)) * (a * (x[i] + 1.0));
            double rs = std::sqrt(1.0 - xs);
            bvn += a * w[i] * (std::exp(-bs / (2.0 * xs) - hk / (1.0 + rs)) / rs - std::exp(-(bs / xs + hk) / 2.0) * (1.0 + c * xs * (1.0 + d * xs)));
            xs = as * (-x[i] + 1.0) * (-x[i] + 1.0) / 4.0;
            rs = std::sqrt(1.0 - xs);
            bvn += a * w[i] * std::exp(-(bs / xs + hk) / 2.0) * (std::exp(-hk * xs / (2.0 * (1.0 + rs) * (1.0 + rs))) / rs - (1.0 + c * xs * (1.0 + d * xs)));
        }
        bvn = -bvn / two_pi;
    }
    if (r > 0.0)
    {
        bvn += cdf(-std::max(h, k));
    }
    else
    {
        bvn = -bvn + std::max(0.0, cdf(-h) - cdf(-k));
    }
    return std::clamp(bvn, 0.0, 1.0);
}

/// P(X <= h, Y <= k) for a standard bivariate normal with correlation r.
inline double bivariate_cdf(double h, double k, double r)
{
    return bivariate_upper(-h, -k, r);
}

} // namespace coprimary::normal

#endif // COPRIMARY_NORMAL_HPP
