#include "aenp/report.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace aenp {

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << text;
    if (!out) throw std::runtime_error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void ResultsTable::add(const std::string& model, const EvalReport& report) {
  rows.push_back({model, to_string(report.mode), report.mean_loglik, report.std_error, report.n_tasks});
}

std::string ResultsTable::to_csv(const Provenance& prov) const {
  std::ostringstream os;
  os << "schema_version,model,mode,loglik,stderr,n_tasks,config_hash,seed,git\n";
  for (const auto& r : rows) {
    os << kSchemaVersion << ',' << r.model << ',' << r.mode << ',' << format_double(r.loglik) << ','
       << format_double(r.std_error) << ',' << r.n_tasks << ',' << prov.config_hash << ','
       << prov.seed << ',' << prov.git << '\n';
  }
  return os.str();
}

std::string loss_curve_csv(const std::vector<EpochRecord>& curve, const Provenance& prov) {
  std::ostringstream os;
  os << "epoch,train_loss,val_loglik,config_hash,seed,git\n";
  for (const auto& r : curve) {
    os << r.epoch << ',' << format_double(r.train_loss) << ',' << format_double(r.val_loglik) << ','
       << prov.config_hash << ',' << prov.seed << ',' << prov.git << '\n';
  }
  return os.str();
}

namespace {

std::string fixed(double v) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(2);
  os << v;
  return os.str();
}

struct Frame {
  double x0, x1, y0, y1;
  double width = 640, height = 360, pad = 40;
  double px(double x) const { return pad + (x - x0) / (x1 - x0) * (width - 2 * pad); }
  double py(double y) const { return height - pad - (y - y0) / (y1 - y0) * (height - 2 * pad); }
};

std::string polyline(const Frame& f, const std::vector<double>& xs, const std::vector<double>& ys) {
  std::string pts;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) pts += ' ';
    pts += fixed(f.px(xs[i])) + ',' + fixed(f.py(ys[i]));
  }
  return pts;
}

std::string band(const Frame& f, const std::vector<double>& xs, const std::vector<double>& lo,
                 const std::vector<double>& hi) {
  std::vector<double> bx(xs), by(hi);
  for (std::size_t i = xs.size(); i-- > 0;) {
    bx.push_back(xs[i]);
    by.push_back(lo[i]);
  }
  return polyline(f, bx, by);
}

}  // namespace

std::string plot_task_svg(const Model& model, const Task& task, double target_margin,
                          const Provenance& prov) {
  NoGradGuard guard;
  const double t_lo = task.target_lo(target_margin), t_hi = task.target_hi(target_margin);
  const std::size_t n = 200;
  std::vector<double> xs(n);
  for (std::size_t i = 0; i < n; ++i) xs[i] = t_lo + (t_hi - t_lo) * static_cast<double>(i) / (n - 1);

  struct Curve {
    std::vector<double> mean, lo, hi;
  };
  auto curve = [&](BankMode mode) {
    const auto p = model.forward(task.x_context, task.y_context, xs, mode);
    Curve c;
    for (std::size_t i = 0; i < n; ++i) {
      const double m = p.mean[i], s = std::sqrt(p.variance[i]);
      c.mean.push_back(m);
      c.lo.push_back(m - 2 * s);
      c.hi.push_back(m + 2 * s);
    }
    return c;
  };
  const Curve full = curve(BankMode::active);
  const Curve strict = curve(BankMode::off);

  double y0 = *std::min_element(full.lo.begin(), full.lo.end());
  double y1 = *std::max_element(full.hi.begin(), full.hi.end());
  y0 = std::min(y0, *std::min_element(strict.lo.begin(), strict.lo.end()));
  y1 = std::max(y1, *std::max_element(strict.hi.begin(), strict.hi.end()));
  for (double y : task.y_context) {
    y0 = std::min(y0, y);
    y1 = std::max(y1, y);
  }
  const double span = std::max(y1 - y0, 1e-3);
  const double xpad = 0.05 * (t_hi - t_lo);
  const Frame f{t_lo - xpad, t_hi + xpad, y0 - 0.05 * span, y1 + 0.05 * span};

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"360\" viewBox=\"0 0 640 360\">\n";
  os << "<!-- config_hash=" << prov.config_hash << " seed=" << prov.seed << " git=" << prov.git
     << " family=" << to_string(model.config().family) << (model.config().tilde ? "~" : "")
     << " task_seed=" << task.seed << " -->\n";
  os << "<rect x=\"0\" y=\"0\" width=\"640\" height=\"360\" fill=\"white\"/>\n";
  os << "<rect x=\"40\" y=\"40\" width=\"560\" height=\"280\" fill=\"none\" stroke=\"#888\"/>\n";
  os << "<polygon points=\"" << band(f, xs, strict.lo, strict.hi)
     << "\" fill=\"#d62728\" fill-opacity=\"0.12\" stroke=\"none\"/>\n";
  os << "<polygon points=\"" << band(f, xs, full.lo, full.hi)
     << "\" fill=\"#1f77b4\" fill-opacity=\"0.2\" stroke=\"none\"/>\n";
  os << "<polyline points=\"" << polyline(f, xs, strict.mean)
     << "\" fill=\"none\" stroke=\"#d62728\" stroke-width=\"1.5\"/>\n";
  os << "<polyline points=\"" << polyline(f, xs, full.mean)
     << "\" fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"1.5\"/>\n";
  for (double x : {t_lo, t_hi}) {
    os << "<line x1=\"" << fixed(f.px(x)) << "\" y1=\"40\" x2=\"" << fixed(f.px(x))
       << "\" y2=\"320\" stroke=\"black\" stroke-dasharray=\"2,3\"/>\n";
  }
  for (std::size_t i = 0; i < task.x_context.size(); ++i) {
    os << "<circle cx=\"" << fixed(f.px(task.x_context[i])) << "\" cy=\"" << fixed(f.py(task.y_context[i]))
       << "\" r=\"2.5\" fill=\"black\"/>\n";
  }
  os << "<text x=\"40\" y=\"345\" font-family=\"sans-serif\" font-size=\"11\">x in [" << fixed(t_lo)
     << ", " << fixed(t_hi) << "]  y in [" << fixed(f.y0) << ", " << fixed(f.y1) << "]</text>\n";
  os << "</svg>\n";
  return os.str();
}

}  // namespace aenp
