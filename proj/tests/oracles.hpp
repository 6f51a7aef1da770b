#pragma once

// Reference implementations used by the tests. They are written for clarity,
// not speed, and share no code with the library.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

namespace oracle {

struct Features {
    double max, min, argmax_um, argmin_um, mean, median, area, skewness, kurtosis;

    std::array<double, 9> as_array() const {
        return {max, min, argmax_um, argmin_um, mean, median, area, skewness, kurtosis};
    }
};

inline Features features(const std::vector<double>& v, const std::vector<double>& nm) {
    const std::size_t n = v.size();
    Features f{};
    std::size_t imax = 0, imin = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (v[i] > v[imax]) imax = i;
        if (v[i] < v[imin]) imin = i;
    }
    f.max = v[imax];
    f.min = v[imin];
    f.argmax_um = nm[imax] / 1000.0;
    f.argmin_um = nm[imin] / 1000.0;

    long double sum = 0;
    for (double x : v) sum += x;
    const long double mean = sum / n;
    f.mean = static_cast<double>(mean);

    std::vector<double> sorted = v;
    std::sort(sorted.begin(), sorted.end());
    f.median = n % 2 ? sorted[n / 2] : (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0;

    long double area = 0;
    for (std::size_t i = 0; i + 1 < n; ++i) area += (v[i] + v[i + 1]) / 2.0L * ((nm[i + 1] - nm[i]) / 1000.0L);
    f.area = static_cast<double>(area);

    long double m2 = 0, m3 = 0, m4 = 0;
    for (double x : v) {
        const long double d = x - mean;
        m2 += d * d;
        m3 += d * d * d;
        m4 += d * d * d * d;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    if (m2 == 0) {
        f.skewness = 0.0;
        f.kurtosis = 3.0;
    } else {
        f.skewness = static_cast<double>(m3 / std::pow(m2, 1.5L));
        f.kurtosis = static_cast<double>(m4 / (m2 * m2));
    }
    return f;
}

/// Closed-form quadratic/cubic Savitzky-Golay smoothing weights for a window of 2m+1.
inline std::vector<double> savgol_quadratic(int m) {
    std::vector<double> c;
    const double denom = (2.0 * m + 3) * (2.0 * m + 1) * (2.0 * m - 1);
    for (int i = -m; i <= m; ++i) c.push_back((3.0 * (3.0 * m * m + 3.0 * m - 1) - 15.0 * i * i) / denom);
    return c;
}

/// Kappa straight from the two label vectors, with the expected agreement
/// counted over all N^2 (truth, prediction) pairs.
inline double kappa_bruteforce(const std::vector<int>& truth, const std::vector<int>& pred) {
    const std::size_t n = truth.size();
    double agree = 0, chance = 0;
    for (std::size_t i = 0; i < n; ++i) agree += truth[i] == pred[i];
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) chance += truth[i] == pred[j];
    const double po = agree / n;
    const double pe = chance / (static_cast<double>(n) * n);
    if (pe == 1.0) return po == 1.0 ? 1.0 : 0.0;
    return (po - pe) / (1.0 - pe);
}

inline double kappa_from_confusion(const std::vector<std::vector<std::size_t>>& c) {
    const std::size_t k = c.size();
    double total = 0, diag = 0;
    std::vector<double> rows(k), cols(k);
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < k; ++j) {
            total += c[i][j];
            rows[i] += c[i][j];
            cols[j] += c[i][j];
            if (i == j) diag += c[i][j];
        }
    const double po = diag / total;
    double pe = 0;
    for (std::size_t i = 0; i < k; ++i) pe += rows[i] * cols[i] / (total * total);
    return (po - pe) / (1.0 - pe);
}

class Gen {
public:
    explicit Gen(std::uint64_t seed) : engine_(seed) {}
    double uniform(double lo, double hi) { return lo + (hi - lo) * (engine_() >> 11) * 0x1.0p-53; }
    std::size_t below(std::size_t n) { return static_cast<std::size_t>(engine_() % n); }
    double normal() {
        const double u1 = uniform(1e-300, 1.0), u2 = uniform(0.0, 1.0);
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }
    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
};

class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static int counter = 0;
        path_ = std::filesystem::temp_directory_path() /
                ("bandsel-test-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

}  // namespace oracle
