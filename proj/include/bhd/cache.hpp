#pragma once

// On-disk eigenpair cache. One directory per entry:
//   <root>/<fnv1a64 key hash>/manifest.json   key string, eigenvalues, residuals, solve report
//   <root>/<fnv1a64 key hash>/vectors.bin     "BHDEIG01", u64 n_pairs, u64 block_size, u64 has_left,
//                                             then per pair the right block and (if present) the
//                                             left block as little-endian (re, im) f64 pairs
// Values are stored bit-exactly, so a hit reproduces the computed system.

#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <optional>
#include <sstream>
#include <string>

#include "json.hpp"

#include "bhd/pipeline.hpp"

namespace bhd {

inline constexpr const char* kCacheEnvVar = "BHD_CACHE_DIR";
inline constexpr int kCacheFormatVersion = 1;

inline std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

/// Shortest round-trip text for a double.
inline std::string exact(double x) {
  std::ostringstream os;
  os << std::setprecision(17) << x;
  return os.str();
}

/// Canonical description of a model for hashing.
inline std::string model_key(const ModelParams& p) {
  std::ostringstream os;
  os << "j=" << exact(p.j) << ";delta=" << exact(p.delta) << ";u=" << exact(p.u_tilde) << ";f=" << exact(p.f_tilde)
     << ";gamma=" << exact(p.gamma) << ";deph=" << exact(p.dephase_rate) << ";n=" << p.n_scale
     << ";loss=" << loss_convention_name(p.loss);
  return os.str();
}

inline std::string solver_key(const SolverSettings& s, int block_size, const std::vector<cplx>& shifts = {}) {
  std::ostringstream os;
  const SolverMethod m = resolve_method(s, block_size);
  os << "method=" << solver_method_name(m);
  if (m == SolverMethod::krylov) {
    os << ";pairs=" << s.krylov.n_pairs << ";dim=" << s.krylov.effective_dim(block_size)
       << ";restarts=" << s.krylov.max_restarts << ";tol=" << exact(s.krylov.tol) << ";seed=" << s.krylov.seed;
  }
  if (m == SolverMethod::shift_invert) {
    os << ";pairs=" << s.shift_invert.n_pairs << ";dim=" << s.shift_invert.krylov_dim
       << ";restarts=" << s.shift_invert.max_restarts << ";tol=" << exact(s.shift_invert.tol)
       << ";seed=" << s.shift_invert.seed << ";shifts=";
    for (const cplx& z : shifts) os << exact(z.real()) << "," << exact(z.imag()) << ";";
  }
  if (m == SolverMethod::dense) os << ";keep=" << s.keep_pairs;
  os << ";left=" << (s.compute_left || m == SolverMethod::dense ? 1 : 0);
  return os.str();
}

inline std::string eigen_cache_key(const ModelParams& p, const FockSpace& space, Sector sector,
                                   const SolverSettings& s, int block_size, const std::vector<cplx>& shifts = {}) {
  std::ostringstream os;
  os << "bhd-eig-v" << kCacheFormatVersion << "|" << model_key(p) << "|kb=" << space.k_b() << ";ka=" << space.k_a()
     << "|sector=" << sector_name(sector) << "|" << solver_key(s, block_size, shifts);
  return os.str();
}

/// Cache root: $BHD_CACHE_DIR, else ./.bhd-cache.
inline std::filesystem::path default_cache_root() {
  if (const char* e = std::getenv(kCacheEnvVar); e != nullptr && *e != '\0') return e;
  return ".bhd-cache";
}

class EigenCache {
 public:
  explicit EigenCache(std::filesystem::path root) : root_(std::move(root)) {}

  const std::filesystem::path& root() const { return root_; }

  std::filesystem::path entry_dir(const std::string& key) const { return root_ / hex64(fnv1a64(key)); }

  std::optional<EigenSystem> load(const std::string& key, const FockSpace& space, Sector sector) const {
    namespace fs = std::filesystem;
    const fs::path dir = entry_dir(key);
    std::ifstream mf(dir / "manifest.json");
    if (!mf) return std::nullopt;
    nlohmann::json m;
    try {
      mf >> m;
    } catch (const std::exception&) {
      return std::nullopt;
    }
    if (m.value("key", std::string()) != key) return std::nullopt;  // hash collision or stale entry

    std::ifstream vf(dir / "vectors.bin", std::ios::binary);
    if (!vf) return std::nullopt;
    char magic[8];
    vf.read(magic, 8);
    if (!vf || std::memcmp(magic, "BHDEIG01", 8) != 0) return std::nullopt;
    const std::uint64_t n_pairs = read_u64(vf);
    const std::uint64_t bs = read_u64(vf);
    const std::uint64_t has_left = read_u64(vf);
    if (!vf) return std::nullopt;

    EigenSystem sys;
    sys.sector = sector;
    sys.space = space;
    sys.index_map = sector_masks(space)[static_cast<int>(sector)];
    if (sys.index_map.size() != bs) return std::nullopt;
    const auto& ev = m.at("eigenvalues");
    const auto& res = m.at("residuals");
    if (ev.size() != n_pairs || res.size() != n_pairs) return std::nullopt;
    for (std::uint64_t i = 0; i < n_pairs; ++i) {
      EigenPair p;
      p.lambda = cplx(ev[i][0].get<double>(), ev[i][1].get<double>());
      p.residual = res[i].get<double>();
      p.sector = sector;
      p.right_block = read_vec(vf, static_cast<Eigen::Index>(bs));
      if (has_left != 0) p.left_block = read_vec(vf, static_cast<Eigen::Index>(bs));
      sys.pairs.push_back(std::move(p));
    }
    if (!vf) return std::nullopt;
    const auto& r = m.at("report");
    const std::string method = r.at("method").get<std::string>();
    sys.report.method = method == "dense"    ? SolveReport::Method::dense
                        : method == "krylov" ? SolveReport::Method::krylov
                                             : SolveReport::Method::shift_invert;
    sys.report.krylov_dim = r.at("krylov_dim").get<int>();
    sys.report.restarts = r.at("restarts").get<int>();
    sys.report.matvecs = r.at("matvecs").get<long>();
    sys.report.converged = r.at("converged").get<bool>();
    sys.report.k_b = r.at("k_b").get<int>();
    sys.report.k_a = r.at("k_a").get<int>();
    sys.report.max_residual = r.at("max_residual").get<double>();
    return sys;
  }

  void store(const std::string& key, const EigenSystem& sys) const {
    namespace fs = std::filesystem;
    const fs::path dir = entry_dir(key);
    fs::create_directories(dir);
    const bool has_left = !sys.pairs.empty() && sys.pairs.front().left_block.size() > 0;
    const std::uint64_t bs = sys.index_map.size();
    {
      std::ofstream vf(dir / "vectors.bin.tmp", std::ios::binary);
      vf.write("BHDEIG01", 8);
      write_u64(vf, sys.pairs.size());
      write_u64(vf, bs);
      write_u64(vf, has_left ? 1 : 0);
      for (const auto& p : sys.pairs) {
        write_vec(vf, p.right_block);
        if (has_left) write_vec(vf, p.left_block);
      }
    }
    nlohmann::json m;
    m["format_version"] = kCacheFormatVersion;
    m["key"] = key;
    m["sector"] = sector_name(sys.sector);
    m["block_size"] = bs;
    m["has_left"] = has_left;
    nlohmann::json ev = nlohmann::json::array(), res = nlohmann::json::array();
    for (const auto& p : sys.pairs) {
      ev.push_back({p.lambda.real(), p.lambda.imag()});
      res.push_back(p.residual);
    }
    m["eigenvalues"] = ev;
    m["residuals"] = res;
    m["report"] = {{"method", method_name(sys.report.method)}, {"krylov_dim", sys.report.krylov_dim},
                   {"restarts", sys.report.restarts},           {"matvecs", sys.report.matvecs},
                   {"converged", sys.report.converged},         {"k_b", sys.report.k_b},
                   {"k_a", sys.report.k_a},                     {"max_residual", sys.report.max_residual}};
    {
      std::ofstream mf(dir / "manifest.json.tmp");
      mf << m.dump(2) << "\n";
    }
    fs::rename(dir / "vectors.bin.tmp", dir / "vectors.bin");
    fs::rename(dir / "manifest.json.tmp", dir / "manifest.json");
  }

  struct GcReport {
    int kept = 0;
    int removed = 0;
    std::uintmax_t bytes_removed = 0;
  };

  /// Removes entries not accessed (by mtime) within max_age, and incomplete entries.
  GcReport gc(std::chrono::seconds max_age, bool dry_run = false) const {
    namespace fs = std::filesystem;
    GcReport r;
    if (!fs::exists(root_)) return r;
    const auto now = fs::file_time_type::clock::now();
    for (const auto& e : fs::directory_iterator(root_)) {
      if (!e.is_directory()) continue;
      const fs::path mf = e.path() / "manifest.json";
      const bool complete = fs::exists(mf) && fs::exists(e.path() / "vectors.bin");
      const bool stale = complete && (now - fs::last_write_time(mf)) > max_age;
      if (complete && !stale) {
        ++r.kept;
        continue;
      }
      std::uintmax_t bytes = 0;
      for (const auto& f : fs::recursive_directory_iterator(e.path())) {
        if (f.is_regular_file()) bytes += f.file_size();
      }
      if (!dry_run) fs::remove_all(e.path());
      ++r.removed;
      r.bytes_removed += bytes;
    }
    return r;
  }

 private:
  static void write_u64(std::ostream& os, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 8);
  }
  static std::uint64_t read_u64(std::istream& is) {
    unsigned char b[8] = {};
    is.read(reinterpret_cast<char*>(b), 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
  }
  static void write_f64(std::ostream& os, double x) {
    std::uint64_t u;
    std::memcpy(&u, &x, 8);
    write_u64(os, u);
  }
  static double read_f64(std::istream& is) {
    const std::uint64_t u = read_u64(is);
    double x;
    std::memcpy(&x, &u, 8);
    return x;
  }
  static void write_vec(std::ostream& os, const DenseVec& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      write_f64(os, v(i).real());
      write_f64(os, v(i).imag());
    }
  }
  static DenseVec read_vec(std::istream& is, Eigen::Index n) {
    DenseVec v(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double re = read_f64(is);
      const double im = read_f64(is);
      v(i) = cplx(re, im);
    }
    return v;
  }

  std::filesystem::path root_;
};

/// solve_sector through the cache. `hit` reports whether the entry existed.
inline EigenSystem cached_solve(const EigenCache* cache, const ModelParams& p, const Superoperator& l, Sector sector,
                                const SolverSettings& s, bool* hit = nullptr) {
  const int bs = static_cast<int>(l.mask(sector).size());
  std::vector<cplx> shifts = s.shift_invert.shifts;
  if (resolve_method(s, bs) == SolverMethod::shift_invert && shifts.empty()) shifts = targets_for(p, sector);
  const std::string key = eigen_cache_key(p, l.space, sector, s, bs, shifts);
  if (cache != nullptr) {
    if (auto sys = cache->load(key, l.space, sector)) {
      if (hit) *hit = true;
      return *sys;
    }
  }
  if (hit) *hit = false;
  EigenSystem sys = solve_sector(l, sector, s, shifts);
  if (cache != nullptr) cache->store(key, sys);
  return sys;
}

}  // namespace bhd
