#include "kernels.hpp"

#include "preprocess.hpp"
#include "runtime.hpp"

#include <cmath>
#include <cstring>
#include <map>
#include <mutex>
#include <stdexcept>

namespace kz::bench {

Kernel kernel_from_name(const std::string& name) {
    if (name == "cg") return Kernel::cg;
    if (name == "ep") return Kernel::ep;
    if (name == "is") return Kernel::is;
    throw std::invalid_argument("unknown kernel '" + name + "' (expected cg, ep or is)");
}

ProblemClass class_from_name(const std::string& name) {
    if (name == "S" || name == "s") return ProblemClass::S;
    if (name == "W" || name == "w") return ProblemClass::W;
    throw std::invalid_argument("unknown class '" + name + "' (expected S or W)");
}

const char* kernel_name(Kernel k) {
    switch (k) {
    case Kernel::cg: return "cg";
    case Kernel::ep: return "ep";
    case Kernel::is: return "is";
    }
    return "?";
}

const char* class_name(ProblemClass c) { return c == ProblemClass::S ? "S" : "W"; }

// ----- NPB-style pseudo-random numbers --------------------------------------

double randlc(double* x, double a) {
    constexpr double r23 = 1.0 / 8388608.0; // 2^-23
    constexpr double r46 = r23 * r23;       // 2^-46
    constexpr double t23 = 8388608.0;       // 2^23
    constexpr double t46 = t23 * t23;       // 2^46

    double t1 = r23 * a;
    double a1 = std::floor(t1);
    double a2 = a - t23 * a1;

    t1 = r23 * (*x);
    double x1 = std::floor(t1);
    double x2 = *x - t23 * x1;

    t1 = a1 * x2 + a2 * x1;
    double t2 = std::floor(r23 * t1);
    double z = t1 - t23 * t2;
    double t3 = t23 * z + a2 * x2;
    double t4 = std::floor(r46 * t3);
    *x = t3 - t46 * t4;
    return r46 * (*x);
}

// ----- CG problem generation --------------------------------------------------
//
// Conjugate-gradient test matrix with a prescribed sparsity distribution,
// following the NAS CG problem statement: a sum of outer products of random
// sparse vectors, with the scaled identity added to bound the smallest
// eigenvalue by rcond, then shifted.

namespace {

struct CgParams {
    int64_t na;
    int64_t nonzer;
    int64_t niter;
    double shift;
};

CgParams cg_params(ProblemClass c) {
    if (c == ProblemClass::S) return {1400, 7, 15, 10.0};
    return {7000, 8, 15, 12.0};
}

struct CgProblem {
    std::vector<int64_t> rowstr;
    std::vector<int64_t> colidx;
    std::vector<double> a;
};

class CgGenerator {
public:
    CgGenerator(int64_t n, int64_t nonzer, double shift)
        : n_(n), nonzer_(nonzer), shift_(shift) {}

    CgProblem generate() {
        const int64_t nz = n_ * (nonzer_ + 1) * (nonzer_ + 1);
        tran_ = 314159265.0;
        (void)randlc(&tran_, amult_);

        int64_t nn1 = 1;
        while (nn1 < n_) nn1 *= 2;

        const size_t rows = size_t(n_);
        const size_t width = size_t(nonzer_ + 1);
        std::vector<int64_t> arow(rows);
        std::vector<std::vector<int64_t>> acol(rows);
        std::vector<std::vector<double>> aelt(rows);
        std::vector<double> vc(width);
        std::vector<int64_t> ivc(width);
        for (int64_t iouter = 0; iouter < n_; ++iouter) {
            int64_t nzv = nonzer_;
            sprnvc(nzv, nn1, vc, ivc);
            vecset(vc, ivc, &nzv, iouter + 1, 0.5);
            arow[size_t(iouter)] = nzv;
            acol[size_t(iouter)].resize(size_t(nzv));
            aelt[size_t(iouter)].resize(size_t(nzv));
            for (int64_t ivelt = 0; ivelt < nzv; ++ivelt) {
                acol[size_t(iouter)][size_t(ivelt)] = ivc[size_t(ivelt)] - 1;
                aelt[size_t(iouter)][size_t(ivelt)] = vc[size_t(ivelt)];
            }
        }
        return assemble(nz, arow, acol, aelt);
    }

private:
    int64_t n_;
    int64_t nonzer_;
    double shift_;
    double tran_ = 314159265.0;
    const double amult_ = 1220703125.0;
    static constexpr double rcond_ = 0.1;

    static int64_t icnvrt(double x, int64_t ipwr2) { return int64_t(double(ipwr2) * x); }

    void sprnvc(int64_t nz, int64_t nn1, std::vector<double>& v, std::vector<int64_t>& iv) {
        int64_t nzv = 0;
        while (nzv < nz) {
            double vecelt = randlc(&tran_, amult_);
            double vecloc = randlc(&tran_, amult_);
            int64_t i = icnvrt(vecloc, nn1) + 1;
            if (i > n_) continue;
            bool was_gen = false;
            for (int64_t ii = 0; ii < nzv; ++ii) {
                if (iv[size_t(ii)] == i) {
                    was_gen = true;
                    break;
                }
            }
            if (was_gen) continue;
            v[size_t(nzv)] = vecelt;
            iv[size_t(nzv)] = i;
            ++nzv;
        }
    }

    static void vecset(std::vector<double>& v, std::vector<int64_t>& iv, int64_t* nzv,
                       int64_t i, double val) {
        bool set = false;
        for (int64_t k = 0; k < *nzv; ++k) {
            if (iv[size_t(k)] == i) {
                v[size_t(k)] = val;
                set = true;
            }
        }
        if (!set) {
            v[size_t(*nzv)] = val;
            iv[size_t(*nzv)] = i;
            *nzv += 1;
        }
    }

    CgProblem assemble(int64_t nz, const std::vector<int64_t>& arow,
                       const std::vector<std::vector<int64_t>>& acol,
                       const std::vector<std::vector<double>>& aelt) {
        const int64_t nrows = n_;
        CgProblem out;
        out.rowstr.assign(size_t(nrows + 1), 0);
        out.colidx.assign(size_t(nz), 0);
        out.a.assign(size_t(nz), 0.0);
        std::vector<int64_t> nzloc(size_t(nrows), 0);

        auto& rowstr = out.rowstr;
        auto& colidx = out.colidx;
        auto& a = out.a;

        for (int64_t i = 0; i < n_; ++i) {
            for (int64_t nza = 0; nza < arow[size_t(i)]; ++nza) {
                int64_t j = acol[size_t(i)][size_t(nza)] + 1;
                rowstr[size_t(j)] += arow[size_t(i)];
            }
        }
        rowstr[0] = 0;
        for (int64_t j = 1; j < nrows + 1; ++j) {
            rowstr[size_t(j)] += rowstr[size_t(j - 1)];
        }
        if (rowstr[size_t(nrows)] - 1 > nz) {
            throw std::runtime_error("space for matrix elements exceeded");
        }

        for (int64_t j = 0; j < nrows; ++j) {
            for (int64_t k = rowstr[size_t(j)]; k < rowstr[size_t(j + 1)]; ++k) {
                a[size_t(k)] = 0.0;
                colidx[size_t(k)] = -1;
            }
        }

        double size = 1.0;
        const double ratio = std::pow(rcond_, 1.0 / double(n_));
        for (int64_t i = 0; i < n_; ++i) {
            for (int64_t nza = 0; nza < arow[size_t(i)]; ++nza) {
                int64_t j = acol[size_t(i)][size_t(nza)];
                double scale = size * aelt[size_t(i)][size_t(nza)];
                for (int64_t nzrow = 0; nzrow < arow[size_t(i)]; ++nzrow) {
                    int64_t jcol = acol[size_t(i)][size_t(nzrow)];
                    double va = aelt[size_t(i)][size_t(nzrow)] * scale;
                    if (jcol == j && j == i) {
                        va += rcond_ - shift_;
                    }
                    int64_t k = rowstr[size_t(j)];
                    bool placed = false;
                    for (; k < rowstr[size_t(j + 1)]; ++k) {
                        if (colidx[size_t(k)] > jcol) {
                            for (int64_t kk = rowstr[size_t(j + 1)] - 2; kk >= k; --kk) {
                                if (colidx[size_t(kk)] > -1) {
                                    a[size_t(kk + 1)] = a[size_t(kk)];
                                    colidx[size_t(kk + 1)] = colidx[size_t(kk)];
                                }
                            }
                            colidx[size_t(k)] = jcol;
                            a[size_t(k)] = 0.0;
                            placed = true;
                            break;
                        }
                        if (colidx[size_t(k)] == -1) {
                            colidx[size_t(k)] = jcol;
                            placed = true;
                            break;
                        }
                        if (colidx[size_t(k)] == jcol) {
                            nzloc[size_t(j)] += 1;
                            placed = true;
                            break;
                        }
                    }
                    if (!placed) {
                        throw std::runtime_error("internal error assembling CG matrix");
                    }
                    a[size_t(k)] += va;
                }
            }
            size *= ratio;
        }

        for (int64_t j = 1; j < nrows; ++j) {
            nzloc[size_t(j)] += nzloc[size_t(j - 1)];
        }
        for (int64_t j = 0; j < nrows; ++j) {
            int64_t j1 = j > 0 ? rowstr[size_t(j)] - nzloc[size_t(j - 1)] : 0;
            int64_t j2 = rowstr[size_t(j + 1)] - nzloc[size_t(j)];
            int64_t nza = rowstr[size_t(j)];
            for (int64_t k = j1; k < j2; ++k) {
                a[size_t(k)] = a[size_t(nza)];
                colidx[size_t(k)] = colidx[size_t(nza)];
                ++nza;
            }
        }
        for (int64_t j = 1; j < nrows + 1; ++j) {
            rowstr[size_t(j)] -= nzloc[size_t(j - 1)];
        }

        int64_t nnz = rowstr[size_t(nrows)];
        out.colidx.resize(size_t(nnz));
        out.a.resize(size_t(nnz));
        return out;
    }
};

const CgProblem& cg_problem(ProblemClass c) {
    static std::map<int, CgProblem> cache;
    static std::mutex mutex;
    std::lock_guard lock(mutex);
    auto it = cache.find(int(c));
    if (it == cache.end()) {
        CgParams params = cg_params(c);
        CgGenerator gen(params.na, params.nonzer, params.shift);
        it = cache.emplace(int(c), gen.generate()).first;
    }
    return it->second;
}

// ----- IS key generation ----------------------------------------------------------

struct IsParams {
    int64_t num_keys;
    int64_t max_key;
    int64_t iters;
};

IsParams is_params(ProblemClass c) {
    if (c == ProblemClass::S) return {int64_t(1) << 16, int64_t(1) << 11, 10};
    return {int64_t(1) << 20, int64_t(1) << 16, 10};
}

std::vector<int64_t> is_keys(ProblemClass c) {
    IsParams params = is_params(c);
    std::vector<int64_t> keys(size_t(params.num_keys));
    double seed = 314159265.0;
    const double a = 1220703125.0;
    const double k = double(params.max_key / 4);
    for (int64_t i = 0; i < params.num_keys; ++i) {
        double x = randlc(&seed, a);
        x += randlc(&seed, a);
        x += randlc(&seed, a);
        x += randlc(&seed, a);
        keys[size_t(i)] = int64_t(k * x);
    }
    return keys;
}

// ----- EP parameters ----------------------------------------------------------------

struct EpParams {
    int64_t npairs;
    int64_t nk; // pairs per batch
};

EpParams ep_params(ProblemClass c) {
    if (c == ProblemClass::S) return {int64_t(1) << 20, 4096};
    return {int64_t(1) << 23, 4096};
}

// ----- kernel-language sources -----------------------------------------------------

// Conjugate gradient: power iteration around the conj_grad routine, with
// parallel regions, worksharing loops, reductions (dot products) and nowait
// where a barrier follows anyway. Problem data is generated by the host and
// injected; sizes follow the desk-scale classes, not the official NPB ones.
const char* const kCgSource = R"KZ(var na: i64 = 0;
var niter: i64 = 0;
var shift_v: f64 = 0.0;
var colidx: []i64 = undefined;
var rowstr: []i64 = undefined;
var a: []f64 = undefined;
var x: []f64 = undefined;
var z: []f64 = undefined;
var p: []f64 = undefined;
var q: []f64 = undefined;
var r: []f64 = undefined;
var rho: f64 = 0.0;
var dvd: f64 = 0.0;
var sum_r: f64 = 0.0;
var zeta: f64 = 0.0;
var rnorm: f64 = 0.0;
var zeta_hist: []f64 = undefined;
var elapsed: f64 = 0.0;

fn conj_grad() void {
    var j: i64 = 0;
    var k: i64 = 0;
    var suml: f64 = 0.0;
    var alpha: f64 = 0.0;
    var rho0: f64 = 0.0;
    var cgit: i64 = 0;
    rho = 0.0;
    dvd = 0.0;
    sum_r = 0.0;
    //$omp parallel firstprivate(na) private(j, k, cgit, suml, alpha, rho0) shared(colidx, rowstr, a, x, z, p, q, r)
    {
        j = 0;
        //$omp while
        while (j < na) : (j += 1) {
            q[j] = 0.0;
            z[j] = 0.0;
            r[j] = x[j];
            p[j] = x[j];
        }
        j = 0;
        //$omp while reduction(+: rho)
        while (j < na) : (j += 1) {
            rho += r[j] * r[j];
        }
        cgit = 0;
        while (cgit < 25) : (cgit += 1) {
            j = 0;
            //$omp while nowait
            while (j < na) : (j += 1) {
                suml = 0.0;
                k = rowstr[j];
                var kend: i64 = rowstr[j + 1];
                while (k < kend) : (k += 1) {
                    suml += a[k] * p[colidx[k]];
                }
                q[j] = suml;
            }
            omp_barrier();
            j = 0;
            //$omp while reduction(+: dvd)
            while (j < na) : (j += 1) {
                dvd += p[j] * q[j];
            }
            alpha = rho / dvd;
            rho0 = rho;
            omp_barrier();
            rho = 0.0;
            dvd = 0.0;
            omp_barrier();
            j = 0;
            //$omp while reduction(+: rho)
            while (j < na) : (j += 1) {
                z[j] = z[j] + alpha * p[j];
                r[j] = r[j] - alpha * q[j];
                rho += r[j] * r[j];
            }
            var beta: f64 = rho / rho0;
            j = 0;
            //$omp while
            while (j < na) : (j += 1) {
                p[j] = r[j] + beta * p[j];
            }
        }
        j = 0;
        //$omp while nowait
        while (j < na) : (j += 1) {
            suml = 0.0;
            k = rowstr[j];
            var kend2: i64 = rowstr[j + 1];
            while (k < kend2) : (k += 1) {
                suml += a[k] * z[colidx[k]];
            }
            r[j] = suml;
        }
        omp_barrier();
        j = 0;
        //$omp while reduction(+: sum_r)
        while (j < na) : (j += 1) {
            var dd: f64 = x[j] - r[j];
            sum_r += dd * dd;
        }
    }
    rnorm = sqrt(sum_r);
}

fn main() void {
    var it: i64 = 0;
    var j: i64 = 0;
    var norm1: f64 = 0.0;
    var norm2: f64 = 0.0;
    j = 0;
    while (j < na) : (j += 1) {
        x[j] = 1.0;
    }
    var t0: f64 = omp_get_wtime();
    it = 1;
    while (it <= niter) : (it += 1) {
        conj_grad();
        norm1 = 0.0;
        norm2 = 0.0;
        j = 0;
        while (j < na) : (j += 1) {
            norm1 += x[j] * z[j];
            norm2 += z[j] * z[j];
        }
        norm2 = 1.0 / sqrt(norm2);
        zeta = shift_v + 1.0 / norm1;
        zeta_hist[it - 1] = zeta;
        j = 0;
        while (j < na) : (j += 1) {
            x[j] = norm2 * z[j];
        }
    }
    elapsed = omp_get_wtime() - t0;
}
)KZ";

// Embarrassingly parallel: batches of pseudo-random pairs transformed into
// Gaussian deviates; per-thread tallies combine through a parallel-region
// reduction and the tail counters through atomic updates. Per-batch seeds
// come from logarithmic skip-ahead, replacing the reference's threadprivate
// generator state with firstprivate values.
const char* const kEpSource = R"KZ(const seed0: f64 = 271828183.0;
const amult: f64 = 1220703125.0;
const r23: f64 = 0.00000011920928955078125;
const t23: f64 = 8388608.0;
var npairs: i64 = 0;
var nk: i64 = 0;
var qcnt: []i64 = undefined;
var sx: f64 = 0.0;
var sy: f64 = 0.0;
var accepted: i64 = 0;
var elapsed: f64 = 0.0;

fn randlc(xp: *f64, aa: f64) f64 {
    var t1: f64 = r23 * aa;
    var a1: f64 = floor(t1);
    var a2: f64 = aa - t23 * a1;
    t1 = r23 * xp.*;
    var x1: f64 = floor(t1);
    var x2: f64 = xp.* - t23 * x1;
    t1 = a1 * x2 + a2 * x1;
    var t2: f64 = floor(r23 * t1);
    var z: f64 = t1 - t23 * t2;
    var t3: f64 = t23 * z + a2 * x2;
    var t4: f64 = floor(r23 * r23 * t3);
    xp.* = t3 - t23 * t23 * t4;
    return r23 * r23 * xp.*;
}

fn batch_seed(batch: i64, an: f64) f64 {
    var t1: f64 = seed0;
    var t2: f64 = an;
    var kk: i64 = batch;
    while (kk > 0) {
        var ik: i64 = kk / 2;
        if (2 * ik != kk) {
            _ = randlc(&t1, t2);
        }
        _ = randlc(&t2, t2);
        kk = ik;
    }
    return t1;
}

fn main() void {
    var nbatches: i64 = npairs / nk;
    var an: f64 = amult;
    var sq: i64 = 0;
    var two_nk: i64 = 2 * nk;
    var pw: i64 = 1;
    while (pw < two_nk) : (pw *= 2) {
        sq += 1;
    }
    var si: i64 = 0;
    while (si < sq) : (si += 1) {
        _ = randlc(&an, an);
    }
    var batch: i64 = 0;
    var t0: f64 = omp_get_wtime();
    //$omp parallel reduction(+: sx) reduction(+: sy) reduction(+: accepted) firstprivate(an) private(batch) shared(qcnt)
    {
        var xbuf: [8192]f64 = undefined;
        var qq: [10]i64 = undefined;
        batch = 0;
        //$omp while schedule(static)
        while (batch < nbatches) : (batch += 1) {
            var xs: f64 = batch_seed(batch, an);
            var gi: i64 = 0;
            var limit: i64 = 2 * nk;
            while (gi < limit) : (gi += 1) {
                xbuf[gi] = randlc(&xs, amult);
            }
            var pi: i64 = 0;
            while (pi < nk) : (pi += 1) {
                var xx: f64 = 2.0 * xbuf[2 * pi] - 1.0;
                var yy: f64 = 2.0 * xbuf[2 * pi + 1] - 1.0;
                var tt: f64 = xx * xx + yy * yy;
                if (tt <= 1.0) {
                    var tf: f64 = sqrt((0.0 - 2.0) * log(tt) / tt);
                    var y1: f64 = xx * tf;
                    var y2: f64 = yy * tf;
                    var l: i64 = @floatToInt(i64, max(abs(y1), abs(y2)));
                    if (l < 10) {
                        qq[l] += 1;
                    }
                    sx += y1;
                    sy += y2;
                    accepted += 1;
                }
            }
        }
        var ci: i64 = 0;
        while (ci < 10) : (ci += 1) {
            //$omp atomic
            qcnt[ci] += qq[ci];
        }
    }
    elapsed = omp_get_wtime() - t0;
}
)KZ";

// Integer sort ranking: histogram with atomic increments, a serial prefix
// scan, and a value-parallel scatter on a static,1 schedule. Ranking works
// on the full key range; the reference implementation's optional bucketed
// variant is not used.
const char* const kIsSource = R"KZ(var num_keys: i64 = 0;
var max_key: i64 = 0;
var iters: i64 = 0;
var key_array: []i64 = undefined;
var key_buff: []i64 = undefined;
var sorted: []i64 = undefined;
var elapsed: f64 = 0.0;

fn rank_keys(iteration: i64) void {
    var i: i64 = 0;
    key_array[iteration] = iteration;
    key_array[iteration + iters] = max_key - iteration;
    //$omp parallel private(i)
    {
        i = 0;
        //$omp while
        while (i < max_key) : (i += 1) {
            key_buff[i] = 0;
        }
        i = 0;
        //$omp while
        while (i < num_keys) : (i += 1) {
            //$omp atomic
            key_buff[key_array[i]] += 1;
        }
    }
    i = 1;
    while (i < max_key) : (i += 1) {
        key_buff[i] += key_buff[i - 1];
    }
}

fn main() void {
    var it: i64 = 0;
    var i: i64 = 0;
    var t0: f64 = omp_get_wtime();
    it = 1;
    while (it <= iters) : (it += 1) {
        rank_keys(it);
    }
    elapsed = omp_get_wtime() - t0;
    //$omp parallel private(i)
    {
        i = 0;
        //$omp while schedule(static, 1)
        while (i < max_key) : (i += 1) {
            var lo: i64 = 0;
            if (i > 0) {
                lo = key_buff[i - 1];
            }
            var hi: i64 = key_buff[i];
            var w: i64 = lo;
            while (w < hi) : (w += 1) {
                sorted[w] = i;
            }
        }
    }
}
)KZ";

} // namespace

const char* kernel_source(Kernel k) {
    switch (k) {
    case Kernel::cg: return kCgSource;
    case Kernel::ep: return kEpSource;
    case Kernel::is: return kIsSource;
    }
    return "";
}

// ----- running ------------------------------------------------------------------------

KernelOutputs run_kernel(Kernel k, ProblemClass c, int threads, bool stripped,
                         vm::ExecMode mode) {
    std::string source = kernel_source(k);
    std::string prepared = stripped ? strip_directives(source) : preprocess(source);
    vm::Program program = vm::Program::compile(prepared, ParseOptions{false});

    switch (k) {
    case Kernel::cg: {
        CgParams params = cg_params(c);
        const CgProblem& problem = cg_problem(c);
        program.inject_i64("na", params.na);
        program.inject_i64("niter", params.niter);
        program.inject_f64("shift_v", params.shift);
        program.inject_array_i64("colidx", problem.colidx);
        program.inject_array_i64("rowstr", problem.rowstr);
        program.inject_array_f64("a", problem.a);
        std::vector<double> zeros(size_t(params.na), 0.0);
        program.inject_array_f64("x", zeros);
        program.inject_array_f64("z", zeros);
        program.inject_array_f64("p", zeros);
        program.inject_array_f64("q", zeros);
        program.inject_array_f64("r", zeros);
        program.inject_array_f64("zeta_hist",
                                 std::vector<double>(size_t(params.niter), 0.0));
        break;
    }
    case Kernel::ep: {
        EpParams params = ep_params(c);
        program.inject_i64("npairs", params.npairs);
        program.inject_i64("nk", params.nk);
        program.inject_array_i64("qcnt", std::vector<int64_t>(10, 0));
        break;
    }
    case Kernel::is: {
        IsParams params = is_params(c);
        program.inject_i64("num_keys", params.num_keys);
        program.inject_i64("max_key", params.max_key);
        program.inject_i64("iters", params.iters);
        program.inject_array_i64("key_array", is_keys(c));
        program.inject_array_i64("key_buff",
                                 std::vector<int64_t>(size_t(params.max_key), 0));
        program.inject_array_i64("sorted",
                                 std::vector<int64_t>(size_t(params.num_keys), 0));
        break;
    }
    }

    rt::set_num_threads(threads);
    auto result = program.run("main", mode);
    if (!result.ok) {
        throw RuntimeError(std::string(kernel_name(k)) + " kernel failed: " + result.error,
                           result.error_offset, result.stack);
    }

    KernelOutputs out;
    out.seconds = program.read_f64("elapsed");
    switch (k) {
    case Kernel::cg:
        out.reals = program.read_array_f64("zeta_hist");
        out.reals.push_back(program.read_f64("zeta"));
        out.rnorm = program.read_f64("rnorm");
        break;
    case Kernel::ep:
        out.ints = program.read_array_i64("qcnt");
        out.ints.push_back(program.read_i64("accepted"));
        out.reals.push_back(program.read_f64("sx"));
        out.reals.push_back(program.read_f64("sy"));
        break;
    case Kernel::is:
        out.ints = program.read_array_i64("key_buff");
        {
            auto sorted = program.read_array_i64("sorted");
            out.ints.insert(out.ints.end(), sorted.begin(), sorted.end());
        }
        break;
    }
    return out;
}

VerifyResult verify_outputs(Kernel k, const KernelOutputs& run, const KernelOutputs& oracle,
                            int threads) {
    VerifyResult result;
    if (k == Kernel::cg) {
        double tolerance = threads == 1 ? 1e-12 : 1e-10;
        if (run.reals.size() != oracle.reals.size()) {
            result.ok = false;
            result.detail = "output length mismatch";
            return result;
        }
        for (size_t i = 0; i < run.reals.size(); ++i) {
            double got = run.reals[i];
            double want = oracle.reals[i];
            double scale = std::max(std::fabs(want), 1e-300);
            if (std::fabs(got - want) / scale > tolerance) {
                result.ok = false;
                char buf[160];
                std::snprintf(buf, sizeof(buf),
                              "cg value %zu differs: got %.17g want %.17g (rel %.3g)", i,
                              got, want, std::fabs(got - want) / scale);
                result.detail = buf;
                return result;
            }
        }
        // The residual after the final iteration sits at rounding-noise
        // level, so it gets an absolute convergence bound rather than a
        // relative comparison.
        if (!(std::fabs(run.rnorm) < 1e-8)) {
            result.ok = false;
            char buf[96];
            std::snprintf(buf, sizeof(buf), "cg residual did not converge: %.17g", run.rnorm);
            result.detail = buf;
        }
        return result;
    }
    if (run.ints != oracle.ints) {
        result.ok = false;
        for (size_t i = 0; i < std::min(run.ints.size(), oracle.ints.size()); ++i) {
            if (run.ints[i] != oracle.ints[i]) {
                char buf[160];
                std::snprintf(buf, sizeof(buf), "%s value %zu differs: got %lld want %lld",
                              kernel_name(k), i, (long long)run.ints[i],
                              (long long)oracle.ints[i]);
                result.detail = buf;
                return result;
            }
        }
        result.detail = "output length mismatch";
    }
    return result;
}

} // namespace kz::bench
