#pragma once

// Divergence between teacher-forced and free-running hidden states, likelihood
// units, and CSV emission for curves, state clouds and 2-D projections.

#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "pf/engine.hpp"
#include "pf/generator.hpp"
#include "pf/io.hpp"
#include "pf/rng.hpp"

namespace pf {

inline double bits_per_character(double total_nll_nats, std::size_t n_symbols) {
    if (n_symbols == 0) throw std::invalid_argument("bits_per_character: no symbols");
    return total_nll_nats / (static_cast<double>(n_symbols) * std::log(2.0));
}

struct StateCloud {
    std::vector<std::vector<double>> points;
    Mode mode = Mode::TeacherForced;

    std::size_t dim() const { return points.empty() ? 0 : points[0].size(); }
};

struct DivergenceReport {
    double centroid_distance = 0;
    double mean_cross_distance = 0;
    std::size_t n_tf = 0, n_fr = 0;
};

namespace detail {

inline void check_clouds(const StateCloud& a, const StateCloud& b) {
    if (a.points.empty() || b.points.empty()) throw std::invalid_argument("state cloud is empty");
    const std::size_t d = a.dim();
    for (const auto* c : {&a, &b})
        for (const auto& p : c->points)
            if (p.size() != d) throw DimensionError("state clouds have different dimensionality");
}

inline double euclid(std::span<const double> p, std::span<const double> q) {
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) s += (p[i] - q[i]) * (p[i] - q[i]);
    return std::sqrt(s);
}

inline std::vector<double> centroid(const StateCloud& c) {
    std::vector<double> m(c.dim(), 0.0);
    for (const auto& p : c.points)
        for (std::size_t i = 0; i < m.size(); ++i) m[i] += p[i];
    for (auto& x : m) x /= static_cast<double>(c.points.size());
    return m;
}

}  // namespace detail

inline double centroid_distance(const StateCloud& a, const StateCloud& b) {
    detail::check_clouds(a, b);
    return detail::euclid(detail::centroid(a), detail::centroid(b));
}

// Mean of ||p − q|| over all pairs p ∈ a, q ∈ b.
inline double mean_cross_distance(const StateCloud& a, const StateCloud& b) {
    detail::check_clouds(a, b);
    double s = 0.0;
    for (const auto& p : a.points)
        for (const auto& q : b.points) s += detail::euclid(p, q);
    return s / static_cast<double>(a.points.size() * b.points.size());
}

inline DivergenceReport divergence(const StateCloud& tf, const StateCloud& fr) {
    return {centroid_distance(tf, fr), mean_cross_distance(tf, fr), tf.points.size(), fr.points.size()};
}

// ---------------------------------------------------------------------------
// Top-2 principal projection

struct Projection2D {
    std::vector<std::array<double, 2>> coords;
    std::array<double, 2> explained_variance{};  // eigenvalues of the 1/n covariance
    std::array<std::vector<double>, 2> components;
    bool degenerate = false;
};

// Centers the points and projects them on the two leading eigenvectors of the
// covariance, found by power iteration with deflation from a seeded start.
inline Projection2D project_2d(std::span<const std::vector<double>> points, std::uint64_t seed = 0x5eed,
                               double tol = 1e-9, std::size_t max_iter = 200000) {
    if (points.size() < 2) throw std::invalid_argument("project_2d: need at least two points");
    const std::size_t d = points[0].size();
    if (d < 2) throw std::invalid_argument("project_2d: need dimension >= 2");
    for (const auto& p : points)
        if (p.size() != d) throw DimensionError("project_2d: non-uniform dimensionality");
    const std::size_t n = points.size();

    std::vector<double> mean(d, 0.0);
    for (const auto& p : points)
        for (std::size_t i = 0; i < d; ++i) mean[i] += p[i];
    for (auto& m : mean) m /= static_cast<double>(n);

    std::vector<double> cov(d * d, 0.0);
    for (const auto& p : points)
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = 0; j < d; ++j) cov[i * d + j] += (p[i] - mean[i]) * (p[j] - mean[j]);
    double trace = 0.0;
    for (std::size_t i = 0; i < d; ++i) trace += cov[i * d + i];
    for (auto& c : cov) c /= static_cast<double>(n);

    Projection2D out;
    out.coords.assign(n, {0.0, 0.0});
    if (trace == 0.0) {
        out.degenerate = true;
        out.components = {std::vector<double>(d, 0.0), std::vector<double>(d, 0.0)};
        return out;
    }

    Rng rng(seed);
    auto matvec = [&](const std::vector<double>& v) {
        std::vector<double> r(d, 0.0);
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = 0; j < d; ++j) r[i] += cov[i * d + j] * v[j];
        return r;
    };
    auto normalize = [](std::vector<double>& v) {
        double s = 0.0;
        for (double x : v) s += x * x;
        s = std::sqrt(s);
        if (s > 0.0)
            for (auto& x : v) x /= s;
        return s;
    };
    auto orthogonalize = [](std::vector<double>& v, const std::vector<double>& u) {
        double dot = 0.0;
        for (std::size_t i = 0; i < v.size(); ++i) dot += v[i] * u[i];
        for (std::size_t i = 0; i < v.size(); ++i) v[i] -= dot * u[i];
    };

    for (int k = 0; k < 2; ++k) {
        std::vector<double> v(d);
        for (auto& x : v) x = rng.uniform(-1.0, 1.0);
        if (k == 1) orthogonalize(v, out.components[0]);
        normalize(v);
        for (std::size_t it = 0; it < max_iter; ++it) {
            auto w = matvec(v);
            if (k == 1) orthogonalize(w, out.components[0]);
            const double norm = normalize(w);
            if (norm <= 1e-300 || (k == 1 && norm <= 1e-14 * out.explained_variance[0])) break;  // no variance left
            double delta = 0.0;
            for (std::size_t i = 0; i < d; ++i) delta = std::max(delta, std::abs(w[i] - v[i]));
            v = std::move(w);
            if (delta < tol) break;
        }
        // Rayleigh quotient is the variance along v.
        const auto cv = matvec(v);
        double rq = 0.0;
        for (std::size_t i = 0; i < d; ++i) rq += v[i] * cv[i];
        out.explained_variance[k] = std::max(0.0, rq);
        // Sign convention: largest-magnitude coordinate positive.
        std::size_t arg = 0;
        for (std::size_t i = 1; i < d; ++i)
            if (std::abs(v[i]) > std::abs(v[arg])) arg = i;
        if (v[arg] < 0)
            for (auto& x : v) x = -x;
        out.components[k] = std::move(v);
    }

    for (std::size_t p = 0; p < n; ++p)
        for (int k = 0; k < 2; ++k) {
            double s = 0.0;
            for (std::size_t i = 0; i < d; ++i) s += (points[p][i] - mean[i]) * out.components[k][i];
            out.coords[p][k] = s;
        }
    return out;
}

// ---------------------------------------------------------------------------
// State clouds from a generator

// h_t (1-based t) of the top layer for every sample sequence under teacher
// forcing, and for as many free-running unrolls.
inline std::pair<StateCloud, StateCloud> collect_state_clouds(GeneratorParams& gen, std::span<const Sequence> sample,
                                                              std::size_t t, Rng& rng, double temperature = 1.0) {
    if (sample.empty()) throw std::invalid_argument("collect_state_clouds: empty sample");
    if (t == 0 || t > sample[0].size())
        throw std::out_of_range("timestep " + std::to_string(t) + " outside 1.." + std::to_string(sample[0].size()));
    Tape tape;
    const auto g = bind(tape, gen, false);
    std::vector<Sequence> prefix;
    for (const auto& s : sample) prefix.emplace_back(s.begin(), s.begin() + static_cast<std::ptrdiff_t>(t));
    const auto tf = unroll_teacher_forced(g, prefix, false);
    const auto fr = unroll_free_running(g, sample.size(), t, rng, temperature, false);
    auto to_cloud = [&](Var h, Mode mode) {
        StateCloud c;
        c.mode = mode;
        const std::size_t H = tape.cols(h);
        const auto& v = tape.value(h);
        for (std::size_t r = 0; r < tape.rows(h); ++r) c.points.emplace_back(v.begin() + r * H, v.begin() + (r + 1) * H);
        return c;
    };
    return {to_cloud(tf.hidden.back(), Mode::TeacherForced), to_cloud(fr.hidden.back(), Mode::FreeRunning)};
}

// Same cloud twice from teacher forcing; a sanity baseline whose divergence is 0.
inline std::pair<StateCloud, StateCloud> collect_teacher_forced_pair(GeneratorParams& gen,
                                                                     std::span<const Sequence> sample, std::size_t t) {
    Rng unused(0);
    auto a = collect_state_clouds(gen, sample, t, unused).first;
    auto b = collect_state_clouds(gen, sample, t, unused).first;
    return {std::move(a), std::move(b)};
}

// ---------------------------------------------------------------------------
// CSV emission

inline constexpr const char* kCurvesHeader = "step,nll_per_step,bpc,c_d,c_f,c_t,disc_acc,gate_gen,gate_disc,wallclock_ms";

inline std::string curves_row(const StepMetrics& m, bool with_wallclock = true) {
    std::string s = std::to_string(m.step) + "," + fmt_double(m.nll_per_step) + "," + fmt_double(m.bpc) + "," +
                    fmt_double(m.c_d) + "," + fmt_double(m.c_f) + "," + fmt_double(m.c_t) + "," +
                    fmt_double(m.disc_acc) + "," + (m.gate_gen ? "1" : "0") + "," + (m.gate_disc ? "1" : "0") + ",";
    if (with_wallclock) s += fmt_double(m.wallclock_ms);
    return s;
}

inline std::string curves_csv(std::span<const StepMetrics> history) {
    std::string out = std::string(kCurvesHeader) + "\n";
    for (const auto& m : history) out += curves_row(m) + "\n";
    return out;
}

inline void emit_curves(std::span<const StepMetrics> history, const std::filesystem::path& path) {
    if (history.empty()) throw std::invalid_argument("emit_curves: empty history");
    write_file_atomic(path, curves_csv(history));
}

inline std::vector<StepMetrics> read_curves(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read '" + path.string() + "'");
    std::string line;
    std::getline(in, line);
    if (line != kCurvesHeader) throw std::runtime_error("unexpected curves header: " + line);
    std::vector<StepMetrics> out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto f = split_csv_line(line);
        if (f.size() != 10) throw std::runtime_error("curves row has " + std::to_string(f.size()) + " fields");
        StepMetrics m;
        m.step = std::stoull(f[0]);
        m.nll_per_step = parse_double_field(f[1]);
        m.bpc = parse_double_field(f[2]);
        m.c_d = parse_double_field(f[3]);
        m.c_f = parse_double_field(f[4]);
        m.c_t = parse_double_field(f[5]);
        m.disc_acc = parse_double_field(f[6]);
        m.gate_gen = f[7] == "1";
        m.gate_disc = f[8] == "1";
        m.wallclock_ms = parse_double_field(f[9]);
        out.push_back(m);
    }
    return out;
}

// mode,t,index,x0,x1,... one row per point.
inline std::string clouds_csv(std::span<const StateCloud> clouds, std::size_t t) {
    std::size_t d = 0;
    for (const auto& c : clouds) d = std::max(d, c.dim());
    std::string out = "mode,t,index";
    for (std::size_t i = 0; i < d; ++i) out += ",x" + std::to_string(i);
    out += "\n";
    for (const auto& c : clouds)
        for (std::size_t i = 0; i < c.points.size(); ++i) {
            out += std::string(to_string(c.mode)) + "," + std::to_string(t) + "," + std::to_string(i);
            for (double x : c.points[i]) out += "," + fmt_double(x);
            out += "\n";
        }
    return out;
}

// mode,x,y over the joint projection of all clouds.
inline std::string projection_csv(std::span<const StateCloud> clouds, const Projection2D& proj) {
    std::string out = "mode,x,y\n";
    std::size_t k = 0;
    for (const auto& c : clouds)
        for (std::size_t i = 0; i < c.points.size(); ++i, ++k)
            out += std::string(to_string(c.mode)) + "," + fmt_double(proj.coords.at(k)[0]) + "," +
                   fmt_double(proj.coords.at(k)[1]) + "\n";
    return out;
}

}  // namespace pf
