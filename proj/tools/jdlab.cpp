// Command-line front end: runs experiments from flat key = value configs and replays them.
//
//   jdlab list-models
//   jdlab validate-model NAME | --model-file PATH
//   jdlab run --config PATH --out DIR [--seed U64] [--threads N] [--budget-minutes M]
//   jdlab replay MANIFEST [--seed U64] [--threads N]
//
// Exit codes: 0 all verdicts pass, 1 a verdict failed, 2 bad config, 3 invalid model,
// 4 budget exceeded, 5 replay mismatch, 6 missing file or model.

#include "jdlab/bounds.hpp"
#include "jdlab/estimators.hpp"
#include "jdlab/kernels.hpp"
#include "jdlab/oracle.hpp"
#include "jdlab/record.hpp"
#include "jdlab/simulator.hpp"

#include <CLI11.hpp>
#include <Eigen/Core>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

using namespace jdlab;
namespace fs = std::filesystem;

namespace {

constexpr const char* kVersion = "0.1.0";

enum Exit { kPass = 0, kFail = 1, kParse = 2, kModel = 3, kBudget = 4, kMismatch = 5, kMissing = 6 };

class MissingError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};
class BudgetError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

std::string hex(std::uint64_t v) {
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

// ------------------------------------------------------------------ config access

/// Typed view of a config record. Every key read is marked; leftovers are reported as
/// unknown fields so that typos fail loudly.
class Config {
public:
    explicit Config(Record rec) : rec_(std::move(rec)) {}

    const Record& record() const { return rec_; }
    bool has(const std::string& k) const { return rec_.has(k); }

    std::string str(const std::string& k, const std::string& fallback) {
        used_.insert(k);
        return rec_.get_string(k, fallback);
    }
    std::string str(const std::string& k) {
        used_.insert(k);
        return rec_.get_string(k);
    }
    double num(const std::string& k, double fallback) {
        used_.insert(k);
        return rec_.get_double(k, fallback);
    }
    std::vector<double> list(const std::string& k, std::vector<double> fallback) {
        used_.insert(k);
        return rec_.has(k) ? rec_.get_list(k) : fallback;
    }
    std::size_t count(const std::string& k, std::size_t fallback) {
        used_.insert(k);
        const std::int64_t v = rec_.get_int(k, static_cast<std::int64_t>(fallback));
        if (v <= 0) throw RecordError("'" + k + "' must be a positive count", line(k), k);
        return static_cast<std::size_t>(v);
    }
    bool flag(const std::string& k, bool fallback) {
        used_.insert(k);
        const std::string v = rec_.get_string(k, fallback ? "true" : "false");
        if (v == "true") return true;
        if (v == "false") return false;
        throw RecordError("'" + v + "' is not true or false (field '" + k + "')", line(k), k);
    }
    void touch(const std::string& k) { used_.insert(k); }
    int line(const std::string& k) const {
        const auto* e = rec_.find(k);
        return e ? e->line : 0;
    }
    void finish() const {
        for (const auto& e : rec_.entries())
            if (!used_.count(e.key)) throw RecordError("unknown field '" + e.key + "'", e.line, e.key);
    }

private:
    Record rec_;
    std::set<std::string> used_;
};

struct Artifact {
    std::string name;
    std::string content;
};

struct Outcome {
    bool pass = true;
    std::vector<Artifact> files;
    std::vector<std::string> verdicts;  // "check: PASS" lines
};

struct Context {
    Model model;
    std::uint64_t seed = 0;
    bool seeded = false;
    int threads = 1;
    double budget_minutes = 0.0;
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

    void check_budget(const std::string& where) const {
        if (budget_minutes <= 0.0) return;
        const double used = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count() / 60.0;
        if (used > budget_minutes)
            throw BudgetError("budget of " + format_double(budget_minutes) + " min exceeded after " + where);
    }
    std::uint64_t need_seed(const std::string& kind) const {
        if (!seeded) throw RecordError("experiment '" + kind + "' is stochastic and needs a seed", 0, "seed");
        return seed;
    }
};

Vec as_point(const std::vector<double>& v, int d, const std::string& key) {
    if (static_cast<int>(v.size()) != d)
        throw RecordError("'" + key + "' needs " + std::to_string(d) + " coordinates", 0, key);
    Vec x(d);
    for (int i = 0; i < d; ++i) x(i) = v[static_cast<std::size_t>(i)];
    return x;
}

SimConfig sim_config(Config& c, const Context& ctx, const std::string& kind, std::uint64_t stream) {
    SimConfig s;
    s.seed = ctx.need_seed(kind);
    s.stream = stream;
    s.threads = ctx.threads;
    s.dt = c.num("sim.dt.time", 1e-3);
    s.eps = c.num("sim.eps.length", 0.05);
    s.r_max = c.num("sim.r_max.length", 0.0);
    s.bridge = c.flag("sim.bridge", true);
    s.rate_budget = c.num("sim.rate_budget", s.rate_budget);
    return s;
}

std::string row(const std::vector<double>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + format_double(v[i]);
    return s + "\n";
}

void require_1d(const Context& ctx, const std::string& kind) {
    if (ctx.model.d != 1) throw RecordError("experiment '" + kind + "' runs on d = 1 models only", 0, "model");
}

LatticeGenerator line_lattice(const Model& m, const std::vector<double>& box, double h, int threads) {
    if (box.size() != 2 || !(box[0] < box[1])) throw RecordError("oracle box needs 'lo, hi'", 0, "oracle.box.length");
    LatticeOptions o;
    o.h = h;
    o.box_lo = Vec::Constant(1, box[0]);
    o.box_hi = Vec::Constant(1, box[1]);
    o.threads = threads;
    return LatticeGenerator::build(m, o);
}

void add_verdict(Outcome& out, const std::string& check, bool pass, const std::string& note = "") {
    out.pass = out.pass && pass;
    out.verdicts.push_back(check + ": " + (pass ? "PASS" : "FAIL") + (note.empty() ? "" : " (" + note + ")"));
}

// ------------------------------------------------------------------ experiments

Outcome run_simulate(Config& c, Context& ctx) {
    const int d = ctx.model.d;
    const Vec x0 = as_point(c.list("x0.length", std::vector<double>(static_cast<std::size_t>(d), 0.0)), d, "x0.length");
    const double horizon = c.num("horizon.time", 1.0);
    const auto times = c.list("times.time", {horizon});
    const std::size_t n = c.count("paths", 1000);
    const SimConfig s = sim_config(c, ctx, "simulate", 0);
    const auto ens = simulate_paths(ctx.model, x0, horizon, times, s, n);
    Record rep;
    rep.set("check", "simulate");
    rep.set("paths", static_cast<double>(n));
    rep.set("fingerprint", hex(ens.fingerprint()));
    rep.set("truncated_fraction", ens.truncated_fraction());
    rep.set("killed_fraction", ens.killed_fraction());
    rep.set("alive_fraction", ens.alive_fraction());
    rep.set("proposal_rate", ens.proposal_rate);
    rep.set("r_max", ens.r_max);
    std::vector<double> means;
    for (std::size_t k = 0; k < ens.times.size(); ++k) {
        const auto pos = ens.positions_at(k);
        double m = 0.0;
        for (const auto& p : pos) m += p(0);
        means.push_back(pos.empty() ? 0.0 : m / static_cast<double>(pos.size()));
    }
    rep.set("times", ens.times);
    rep.set("mean_first_coordinate", means);
    Outcome out;
    out.files.push_back({"simulate.report", rep.to_text()});
    out.files.push_back({"paths.csv", ens.to_csv()});
    add_verdict(out, "simulate", true);
    return out;
}

Outcome run_density(Config& c, Context& ctx) {
    require_1d(ctx, "density");
    const double x0 = c.num("x0.length", 0.0);
    const double t = c.num("time.time", 0.2);
    const std::size_t n = c.count("paths", 200000);
    const SimConfig s = sim_config(c, ctx, "density", 0);
    const double h = c.num("oracle.h.length", 0.02);
    const auto box = c.list("oracle.box.length", {x0 - 8.0, x0 + 8.0});
    const int per_bin = static_cast<int>(c.count("bin.nodes", 5));
    const double threshold = c.num("bin.mass_threshold", 1e-3);
    const double sigmas = c.num("bin.sigmas", 3.0);
    const double needed = c.num("pass.fraction", 0.95);
    const auto ens = simulate_paths(ctx.model, Vec::Constant(1, x0), t, {t}, s, n);
    ctx.check_budget("simulation");
    std::vector<double> xs;
    for (const auto& p : ens.positions_at(0)) xs.push_back(p(0));
    const auto g = line_lattice(ctx.model, box, h, ctx.threads);
    const auto hv = evolve(g, g.nearest(Vec::Constant(1, x0)), t);
    const auto ag = density_agreement(g, hv, xs, n, per_bin, threshold, sigmas);
    Record rep;
    rep.set("check", "density");
    rep.set("fingerprint", hex(ens.fingerprint()));
    rep.set("bins", static_cast<double>(ag.bins));
    rep.set("within", static_cast<double>(ag.within));
    rep.set("fraction", ag.fraction);
    rep.set("worst_z", ag.worst_z);
    rep.set("worst_x", ag.worst_x);
    rep.set("truncated_fraction", ens.truncated_fraction());
    const bool pass = ag.bins > 0 && ag.fraction >= needed;
    rep.set("verdict", pass ? "PASS" : "FAIL");
    Outcome out;
    out.files.push_back({"density.report", rep.to_text()});
    out.files.push_back({"density.csv", ag.csv()});
    add_verdict(out, "density", pass);
    return out;
}

Outcome run_oracle(Config& c, Context& ctx) {
    require_1d(ctx, "oracle");
    const double x0 = c.num("x0.length", 0.0);
    const auto times = c.list("times.time", {0.05, 0.2, 1.0});
    const double h = c.num("oracle.h.length", 0.02);
    const auto box = c.list("oracle.box.length", {x0 - 8.0, x0 + 8.0});
    const auto g = line_lattice(ctx.model, box, h, ctx.threads);
    const auto heats = evolve_many(g, g.nearest(Vec::Constant(1, x0)), times);
    std::string csv = "t,x,p\n";
    Record rep;
    rep.set("check", "oracle");
    std::vector<double> mass, leak, trunc;
    for (const auto& hv : heats) {
        for (std::size_t i = 0; i < g.size(); ++i) csv += row({hv.t, g.coord(i)(0), hv.values[i]});
        mass.push_back(hv.mass(g.cell_volume()));
        leak.push_back(hv.leaked);
        trunc.push_back(hv.truncation);
    }
    rep.set("times", times);
    rep.set("mass", mass);
    rep.set("leaked", leak);
    rep.set("truncation", trunc);
    rep.set("nodes", static_cast<double>(g.size()));
    rep.set("max_rate", g.max_rate());
    Outcome out;
    out.files.push_back({"oracle.report", rep.to_text()});
    out.files.push_back({"heat.csv", csv});
    add_verdict(out, "oracle", true);
    return out;
}

std::vector<double> log_grid(double lo, double hi, std::size_t n) {
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i)
        v[i] = n == 1 ? lo : lo * std::pow(hi / lo, static_cast<double>(i) / static_cast<double>(n - 1));
    return v;
}

Outcome run_bounds(Config& c, Context& ctx) {
    if (ctx.model.kernel.is_zero()) throw ModelError("bounds: the model has no jump kernel");
    const auto& phi = ctx.model.kernel.scale();
    const int d = ctx.model.d;
    EnvelopeConstants k;
    k.c1 = c.num("envelope.c1", 1.0);
    k.c2 = c.num("envelope.c2", 1.0);
    k.c3 = c.num("envelope.c3", 1.0);
    k.c4 = c.num("envelope.c4", 1.0);
    k.validate();
    const std::size_t n = c.count("grid.points", 64);
    const auto t_range = c.list("grid.t.time", {1e-3, 10.0});
    const auto r_range = c.list("grid.R.length", {1e-3, 10.0});
    if (t_range.size() != 2 || r_range.size() != 2) throw RecordError("grid ranges need 'lo, hi'", 0, "grid");
    std::string csv = "t,R,p_c,p_j,on_diagonal,lower,upper\n";
    for (double t : log_grid(t_range[0], t_range[1], n))
        for (double R : log_grid(r_range[0], r_range[1], n))
            csv += row({t, R, p_c(t, R, d), p_j(t, R, phi, d), on_diagonal(t, phi, d),
                        envelope(t, R, phi, d, k, Side::Lower), envelope(t, R, phi, d, k, Side::Upper)});
    Record rep;
    rep.set("check", "bounds");
    rep.set("c1", k.c1);
    rep.set("c2", k.c2);
    rep.set("c3", k.c3);
    rep.set("c4", k.c4);
    rep.set("points", static_cast<double>(n * n));
    Outcome out;
    out.files.push_back({"bounds.report", rep.to_text()});
    out.files.push_back({"bounds.csv", csv});
    add_verdict(out, "bounds", true);
    return out;
}

Outcome run_regions(Config& c, Context& ctx) {
    if (ctx.model.kernel.is_zero()) throw ModelError("regions: the model has no jump kernel");
    const auto& phi = ctx.model.kernel.scale();
    const std::size_t n = c.count("grid.points", 512);
    const auto range = c.list("grid.range", {1e-3, 10.0});
    if (range.size() != 2) throw RecordError("grid.range needs 'lo, hi'", c.line("grid.range"), "grid.range");
    const auto cells = region_sweep(phi, ctx.model.d, static_cast<int>(n), range[0], range[1], ctx.threads);
    std::string csv = "t,R,case,dominant,on_diagonal,gaussian,jump\n";
    std::vector<double> counts(6, 0.0);
    std::size_t unlabeled = 0, jump_inside = 0;
    for (const auto& cell : cells) {
        const auto& r = cell.report;
        csv += format_double(cell.t) + "," + format_double(cell.R) + "," + std::to_string(r.case_label) + "," +
               dominant_name(r.dominant) + "," + format_double(r.on_diagonal) + "," + format_double(r.gaussian) +
               "," + format_double(r.jump) + "\n";
        if (r.case_label < 1 || r.case_label > 5) ++unlabeled;
        else counts[static_cast<std::size_t>(r.case_label)] += 1.0;
        if (r.dominant == Dominant::Jump && cell.t <= cell.R * cell.R && cell.R * cell.R <= 1.0) ++jump_inside;
    }
    const bool pass = unlabeled == 0 && jump_inside > 0;
    Record rep;
    rep.set("check", "regions");
    rep.set("verdict", pass ? "PASS" : "FAIL");
    rep.set("cells", static_cast<double>(cells.size()));
    rep.set("case_counts", std::vector<double>(counts.begin() + 1, counts.end()));
    rep.set("unlabeled", static_cast<double>(unlabeled));
    rep.set("jump_dominant_inside", static_cast<double>(jump_inside));
    Outcome out;
    out.files.push_back({"regions.report", rep.to_text()});
    out.files.push_back({"regions.csv", csv});
    add_verdict(out, "regions", pass);
    return out;
}

Outcome verify_exit(Config& c, Context& ctx) {
    const int d = ctx.model.d;
    const Vec x0 = as_point(c.list("x0.length", std::vector<double>(static_cast<std::size_t>(d), 0.0)), d, "x0.length");
    const auto radii = c.list("exit.radii.length", {0.25, 0.5, 1.0});
    const std::size_t n = c.count("exit.paths", 20000);
    const double dt_per_r2 = c.num("exit.dt_per_r2", 1e-3);
    const double target = c.num("exit.slope_target", 2.0);
    const double tol = c.num("exit.slope_tolerance", 0.15);
    const SimConfig s = sim_config(c, ctx, "verify-exit", 1);
    const auto rep = exit_scaling(ctx.model, x0, radii, s, n, dt_per_r2);
    const bool pass = rep.all_usable && std::abs(rep.fit.slope - target) <= tol;
    Record rec = rep.to_record();
    rec.set("slope_target", target);
    rec.set("slope_tolerance", tol);
    rec.set("verdict", pass ? "PASS" : "FAIL");
    std::string csv = "radius,mean,se,lo,hi,exited,n,confined_fraction\n";
    for (const auto& e : rep.radii)
        csv += row({e.radius, e.mean, e.se, e.lo, e.hi, static_cast<double>(e.exited), static_cast<double>(e.n),
                    e.confined_fraction});
    Outcome out;
    out.files.push_back({"exit.report", rec.to_text()});
    out.files.push_back({"exit.csv", csv});
    add_verdict(out, "exit", pass, "slope " + format_double(rep.fit.slope));
    return out;
}

Outcome verify_hitting(Config& c, Context& ctx) {
    const int d = ctx.model.d;
    const Vec x0 = as_point(c.list("x0.length", std::vector<double>(static_cast<std::size_t>(d), 0.0)), d, "x0.length");
    const double r = c.num("hitting.r.length", 0.05);
    const auto s_list = c.list("hitting.s.length", {0.5, 1.0});
    const std::size_t n = c.count("hitting.paths", 200000);
    SimConfig s = sim_config(c, ctx, "verify-hitting", 2);
    s.dt = c.num("hitting.dt.time", 1e-3 * r * r);
    s.eps = c.num("hitting.eps.length", std::min(s.eps, 0.2 * r));
    const auto rep = hitting_scaling(ctx.model, x0, r, s_list, s, n);
    std::string csv = "s,p,se,lo,hi,hits,exits,bound_shape\n";
    for (const auto& h : rep.tails)
        csv += row({h.s, h.p, h.se, h.lo, h.hi, static_cast<double>(h.hits), static_cast<double>(h.exits),
                    h.bound_shape});
    Outcome out;
    out.files.push_back({"hitting.report", rep.to_record().to_text()});
    out.files.push_back({"hitting.csv", csv});
    add_verdict(out, "hitting", rep.pass, rep.reason);
    return out;
}

OracleGrid oracle_grid(Config& c, const Context& ctx, double nodes, double margin) {
    OracleGrid g;
    g.h_per_scale = c.num("oracle.nodes_per_scale", nodes);
    g.margin = c.num("oracle.margin.length", margin);
    g.threads = ctx.threads;
    return g;
}

Outcome verify_harnack(Config& c, Context& ctx) {
    require_1d(ctx, "verify-harnack");
    const auto bases = c.list("harnack.bases.length", {-1.0, 0.0, 1.5});
    const auto radii = c.list("harnack.radii.length", {0.125, 0.25, 0.5});
    const double delta = c.num("harnack.delta", 0.1);
    const double factor = c.num("harnack.factor", 3.0);
    const OracleGrid g = oracle_grid(c, ctx, 50.0, 2.0);
    Outcome out;
    Record all;
    std::string csv = "base,R,sup_minus,inf_plus,ratio\n";
    bool pass = true;
    for (std::size_t i = 0; i < bases.size(); ++i) {
        const auto rep = harnack_ratio(ctx.model, bases[i], radii, delta, g, factor);
        pass = pass && rep.pass;
        all.merge(rep.to_record(), "base." + std::to_string(i) + ".");
        for (const auto& s : rep.scales) csv += row({bases[i], s.R, s.sup_minus, s.inf_plus, s.ratio});
        ctx.check_budget("harnack base " + std::to_string(i));
    }
    all.set("verdict", pass ? "PASS" : "FAIL");
    out.files.push_back({"harnack.report", all.to_text()});
    out.files.push_back({"harnack.csv", csv});
    add_verdict(out, "harnack", pass);
    return out;
}

Outcome verify_holder(Config& c, Context& ctx) {
    require_1d(ctx, "verify-holder");
    const double x0 = c.num("x0.length", 0.0);
    const auto radii = c.list("holder.radii.length", {0.25, 0.5});
    const double stability = c.num("holder.stability", 0.5);
    const OracleGrid g = oracle_grid(c, ctx, 40.0, 1.0);
    Record all;
    std::string csv = "R,distance,max_increment\n";
    bool pass = true;
    double lo = 1e300, hi = 0.0;
    for (std::size_t i = 0; i < radii.size(); ++i) {
        const auto rep = holder_modulus(ctx.model, x0, radii[i], g);
        pass = pass && rep.resolved && rep.kappa > 0.0 && rep.lo > 0.0;
        lo = std::min(lo, rep.kappa);
        hi = std::max(hi, rep.kappa);
        all.merge(rep.to_record(), "R." + std::to_string(i) + ".");
        for (std::size_t k = 0; k < rep.distances.size(); ++k) csv += row({radii[i], rep.distances[k], rep.maxima[k]});
    }
    const double rel = hi > 0.0 ? (hi - lo) / hi : 0.0;
    pass = pass && rel <= stability;
    all.set("relative_spread", rel);
    all.set("verdict", pass ? "PASS" : "FAIL");
    Outcome out;
    out.files.push_back({"holder.report", all.to_text()});
    out.files.push_back({"holder.csv", csv});
    add_verdict(out, "holder", pass);
    return out;
}

Outcome verify_sandwich(Config& c, Context& ctx) {
    require_1d(ctx, "verify-sandwich");
    const auto times = c.list("sandwich.times.time", {0.05, 0.2, 1.0});
    const auto bases = c.list("sandwich.bases.length", {-1.0, 0.0, 1.5});
    const double h = c.num("oracle.h.length", 0.02);
    const auto box = c.list("oracle.box.length", {-8.0, 8.0});
    const double budget = c.num("sandwich.ratio_budget", 1e3);
    const auto g = line_lattice(ctx.model, box, h, ctx.threads);
    std::vector<DensitySample> data;
    for (double b : bases) {
        const auto s = density_samples(g, evolve_many(g, g.nearest(Vec::Constant(1, b)), times));
        data.insert(data.end(), s.begin(), s.end());
        ctx.check_budget("sandwich base");
    }
    const ScaleFunction* phi = ctx.model.kernel.is_zero() ? nullptr : &ctx.model.kernel.scale();
    const auto fit = fit_sandwich(data, phi, 1, budget);
    std::string csv = "t,base,R,value\n";
    for (const auto& p : data) csv += row({p.t, p.x, p.R, p.value});
    Outcome out;
    out.files.push_back({"sandwich.report", fit.to_record().to_text()});
    out.files.push_back({"sandwich.csv", csv});
    add_verdict(out, "sandwich", fit.pass, fit.reason);
    return out;
}

Outcome verify_tightness(Config& c, Context& ctx) {
    require_1d(ctx, "verify-tightness");
    const double x0 = c.num("x0.length", 0.0);
    const auto times = c.list("tightness.times.time", {0.01, 0.1, 1.0});
    const auto multiples = c.list("tightness.multiples", {1.5, 3.0, 6.0});
    const double c1 = c.num("tightness.c1", 2.0);
    const double min_count = c.num("tightness.min_count", 100.0);
    SimConfig s = sim_config(c, ctx, "verify-tightness", 3);
    s.dt = c.num("tightness.dt.time", s.dt);
    s.eps = c.num("tightness.eps.length", s.eps);
    const auto rep = tightness_check(ctx.model, x0, times, multiples, s, c1, min_count);
    std::string csv = "t,displacement,predicted,n,hits,p,ratio,ratio_lo\n";
    for (const auto& p : rep.points)
        csv += row({p.t, p.displacement, p.predicted, static_cast<double>(p.n), static_cast<double>(p.hits.k),
                    p.hits.p, p.ratio, p.ratio_lo});
    Outcome out;
    out.files.push_back({"tightness.report", rep.to_record().to_text()});
    out.files.push_back({"tightness.csv", csv});
    add_verdict(out, "tightness", rep.pass || rep.skipped, rep.skipped ? "skipped: " + rep.reason : rep.reason);
    return out;
}

void absorb(Outcome& into, Outcome&& part) {
    into.pass = into.pass && part.pass;
    for (auto& f : part.files) into.files.push_back(std::move(f));
    for (auto& v : part.verdicts) into.verdicts.push_back(std::move(v));
}

Outcome verify_all(Config& c, Context& ctx) {
    Outcome out;
    absorb(out, verify_exit(c, ctx));
    ctx.check_budget("verify-exit");
    if (ctx.model.d == 1) {
        absorb(out, verify_sandwich(c, ctx));
        ctx.check_budget("verify-sandwich");
        absorb(out, verify_harnack(c, ctx));
        ctx.check_budget("verify-harnack");
        absorb(out, verify_holder(c, ctx));
        ctx.check_budget("verify-holder");
    }
    if (!ctx.model.kernel.is_zero()) {
        absorb(out, verify_hitting(c, ctx));
        ctx.check_budget("verify-hitting");
        if (ctx.model.d == 1) {
            absorb(out, verify_tightness(c, ctx));
            ctx.check_budget("verify-tightness");
        }
    }
    // keys of checks that did not apply to this model are still accepted
    for (const auto& e : c.record().entries()) c.touch(e.key);
    return out;
}

using Runner = Outcome (*)(Config&, Context&);

const std::map<std::string, Runner>& runners() {
    static const std::map<std::string, Runner> m{
        {"simulate", run_simulate},           {"density", run_density},
        {"oracle", run_oracle},               {"bounds", run_bounds},
        {"regions", run_regions},             {"verify-exit", verify_exit},
        {"verify-hitting", verify_hitting},   {"verify-harnack", verify_harnack},
        {"verify-holder", verify_holder},     {"verify-sandwich", verify_sandwich},
        {"verify-tightness", verify_tightness}, {"verify-all", verify_all},
    };
    return m;
}

// ------------------------------------------------------------------ model resolution

Model resolve_model(Config& c, const fs::path& base_dir) {
    Model m;
    if (c.has("model.file")) {
        fs::path p = c.str("model.file");
        if (p.is_relative()) p = base_dir / p;
        if (!fs::exists(p)) throw MissingError("model file '" + p.string() + "' not found");
        m = Model::from_record(Record::load(p.string()));
    } else {
        const std::string name = c.str("model");
        const auto names = model_names();
        if (std::find(names.begin(), names.end(), name) == names.end())
            throw MissingError("no built-in model named '" + name + "' (see list-models)");
        m = make_model(name);
    }
    const auto v = validate_model(m);
    if (!v.pass) {
        std::string why;
        for (const auto& f : v.failures) why += "\n  " + f;
        throw ModelError("model '" + m.name + "' failed validation:" + why);
    }
    return m;
}

// ------------------------------------------------------------------ run and replay

struct RunResult {
    Outcome outcome;
    Record manifest;
};

std::string eigen_version() {
    return std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
           std::to_string(EIGEN_MINOR_VERSION);
}

/// Parses, validates and runs; nothing touches the disk.
RunResult execute(Record config, const fs::path& base_dir, std::optional<std::uint64_t> seed_override, int threads,
                  double budget_minutes) {
    if (seed_override) config.set("seed", std::to_string(*seed_override));
    Config c(config);
    const std::string kind = c.str("experiment");
    const auto it = runners().find(kind);
    if (it == runners().end())
        throw RecordError("unknown experiment '" + kind + "'", c.line("experiment"), "experiment");
    Context ctx;
    ctx.threads = threads;
    ctx.budget_minutes = budget_minutes;
    if (c.has("seed")) {
        c.touch("seed");
        ctx.seed = config.get_u64("seed");
        ctx.seeded = true;
    }
    ctx.model = resolve_model(c, base_dir);
    RunResult r;
    r.outcome = it->second(c, ctx);
    c.finish();
    ctx.check_budget(kind);

    Record& m = r.manifest;
    m.set("manifest.format", "1");
    m.set("tool.name", "jdlab");
    m.set("tool.version", kVersion);
    m.set("tool.compiler", __VERSION__);
    m.set("tool.eigen", eigen_version());
    m.set("experiment", kind);
    m.set("seed", ctx.seeded ? std::to_string(ctx.seed) : "none");
    m.set("config.hash", hex(fnv1a(config.to_text())));
    m.set("config.dir", fs::absolute(base_dir).lexically_normal().string());
    for (const auto& e : config.entries()) m.set("config." + e.key, e.value);
    m.merge(ctx.model.to_record(), "resolved.");
    for (const auto& f : r.outcome.files) m.set("artifact." + f.name, hex(fnv1a(f.content)));
    m.set("verdict", r.outcome.pass ? "PASS" : "FAIL");
    return r;
}

void write_atomic(const fs::path& path, const std::string& content) {
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write '" + tmp.string() + "'");
        out << content;
        if (!out.flush()) throw std::runtime_error("write failed for '" + tmp.string() + "'");
    }
    fs::rename(tmp, path);
}

int report_error(const std::exception& e, int code) {
    std::cerr << "jdlab: " << e.what() << "\n";
    return code;
}

template <class F>
int guarded(F&& f) {
    try {
        return f();
    } catch (const RecordError& e) {
        return report_error(e, kParse);
    } catch (const ConfigError& e) {
        return report_error(e, kParse);
    } catch (const DomainError& e) {
        return report_error(e, kParse);
    } catch (const ModelError& e) {
        return report_error(e, kModel);
    } catch (const ValidationError& e) {
        return report_error(e, kModel);
    } catch (const BudgetError& e) {
        return report_error(e, kBudget);
    } catch (const MissingError& e) {
        return report_error(e, kMissing);
    } catch (const std::exception& e) {
        return report_error(e, kFail);
    }
}

int cmd_run(const std::string& config_path, const std::string& out_dir, std::optional<std::uint64_t> seed,
            int threads, double budget) {
    if (!fs::exists(config_path)) throw MissingError("config '" + config_path + "' not found");
    const Record config = Record::load(config_path);
    const fs::path base = fs::path(config_path).parent_path();
    const RunResult r = execute(config, base.empty() ? fs::path(".") : base, seed, threads, budget);
    fs::create_directories(out_dir);
    for (const auto& f : r.outcome.files) write_atomic(fs::path(out_dir) / f.name, f.content);
    write_atomic(fs::path(out_dir) / "manifest.txt", r.manifest.to_text());
    for (const auto& v : r.outcome.verdicts) std::cout << v << "\n";
    std::cout << (r.outcome.pass ? "PASS" : "FAIL") << "\n";
    return r.outcome.pass ? kPass : kFail;
}

std::string first_difference(const std::string& a, const std::string& b) {
    std::istringstream sa(a), sb(b);
    std::string la, lb;
    int line = 0;
    while (true) {
        const bool ga = static_cast<bool>(std::getline(sa, la));
        const bool gb = static_cast<bool>(std::getline(sb, lb));
        ++line;
        if (!ga && !gb) return "";
        if (!ga || !gb || la != lb)
            return "line " + std::to_string(line) + ": expected '" + (ga ? la : "<eof>") + "', got '" +
                   (gb ? lb : "<eof>") + "'";
    }
}

int cmd_replay(const std::string& manifest_path, std::optional<std::uint64_t> seed, int threads) {
    if (!fs::exists(manifest_path)) throw MissingError("manifest '" + manifest_path + "' not found");
    const Record manifest = Record::load(manifest_path);
    const Record sub = manifest.sub("config.");
    Record config;
    for (const auto& e : sub.entries())
        if (e.key != "hash" && e.key != "dir") config.set(e.key, e.value);
    if (hex(fnv1a(config.to_text())) != manifest.get_string("config.hash"))
        throw RecordError("manifest config does not match its recorded hash", 0, "config.hash");
    const RunResult r = execute(config, manifest.get_string("config.dir"), seed, threads, 0.0);
    const fs::path dir = fs::path(manifest_path).parent_path();
    std::vector<std::string> diffs;
    std::set<std::string> produced;
    for (const auto& f : r.outcome.files) {
        produced.insert(f.name);
        const std::string key = "artifact." + f.name;
        const std::string want = manifest.get_string(key, "");
        const std::string got = hex(fnv1a(f.content));
        if (want.empty()) {
            diffs.push_back(f.name + ": not in the manifest");
            continue;
        }
        if (want == got) continue;
        std::string detail = f.name + ": hash " + want + " -> " + got;
        std::ifstream in(dir / f.name, std::ios::binary);
        if (in) {
            std::ostringstream ss;
            ss << in.rdbuf();
            const std::string where = first_difference(ss.str(), f.content);
            if (!where.empty()) detail += ", first difference at " + where;
        }
        diffs.push_back(detail);
    }
    for (const auto& e : manifest.entries())
        if (e.key.rfind("artifact.", 0) == 0 && !produced.count(e.key.substr(9)))
            diffs.push_back(e.key.substr(9) + ": not produced by the replay");
    if (r.manifest.get_string("verdict") != manifest.get_string("verdict"))
        diffs.push_back("verdict: " + manifest.get_string("verdict") + " -> " + r.manifest.get_string("verdict"));
    if (diffs.empty()) {
        std::cout << "replay identical: " << produced.size() << " artifacts\n";
        return kPass;
    }
    std::cout << "replay mismatch:\n";
    for (const auto& d : diffs) std::cout << "  " << d << "\n";
    return kMismatch;
}

int cmd_validate(const std::string& name, const std::string& file) {
    Model m;
    if (!file.empty()) {
        if (!fs::exists(file)) throw MissingError("model file '" + file + "' not found");
        m = Model::from_record(Record::load(file));
    } else {
        const auto names = model_names();
        if (std::find(names.begin(), names.end(), name) == names.end())
            throw MissingError("no built-in model named '" + name + "'");
        m = make_model(name);
    }
    const auto v = validate_model(m);
    std::cout << "model = " << m.name << "\n";
    std::cout << "ellipticity = " << (v.ellipticity.pass ? "ok" : "violated") << "\n";
    std::cout << "symmetry_defect = " << format_double(v.symmetry) << "\n";
    std::cout << "comparability = " << format_double(v.comparability_low) << ", "
              << format_double(v.comparability_high) << "\n";
    std::cout << "integrability = " << format_double(v.integrability.sup_value) << " (budget "
              << format_double(v.integrability.budget) << ")\n";
    for (const auto& f : v.failures) std::cout << "failure = " << f << "\n";
    std::cout << (v.pass ? "VALID" : "INVALID") << "\n";
    return v.pass ? kPass : kModel;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Jump-diffusion heat kernel laboratory"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kVersion);

    int threads = 1;
    std::optional<std::uint64_t> seed;
    double budget = 0.0;
    std::string config_path, out_dir, manifest_path, model_name, model_file;

    auto* run = app.add_subcommand("run", "run an experiment config");
    run->add_option("--config", config_path, "experiment config")->required();
    run->add_option("--out", out_dir, "output directory")->required();
    run->add_option("--seed", seed, "override the config seed");
    run->add_option("--threads", threads, "worker threads (results do not depend on it)")->check(CLI::PositiveNumber);
    run->add_option("--budget-minutes", budget, "wall-clock budget, 0 for none")->check(CLI::NonNegativeNumber);

    auto* replay = app.add_subcommand("replay", "re-run a manifest and compare artifacts");
    replay->add_option("manifest", manifest_path, "manifest.txt of a completed run")->required();
    replay->add_option("--seed", seed, "override the recorded seed");
    replay->add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);

    auto* validate = app.add_subcommand("validate-model", "check a model against the structural conditions");
    validate->add_option("name", model_name, "built-in model name");
    validate->add_option("--model-file", model_file, "model record file");

    auto* list = app.add_subcommand("list-models", "print the built-in model names");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kPass : kParse;
    }

    if (list->parsed()) {
        for (const auto& n : model_names()) std::cout << n << "\n";
        return kPass;
    }
    if (validate->parsed()) {
        if (model_name.empty() == model_file.empty()) {
            std::cerr << "jdlab: give either a model name or --model-file\n";
            return kParse;
        }
        return guarded([&] { return cmd_validate(model_name, model_file); });
    }
    if (run->parsed()) return guarded([&] { return cmd_run(config_path, out_dir, seed, threads, budget); });
    return guarded([&] { return cmd_replay(manifest_path, seed, threads); });
}
