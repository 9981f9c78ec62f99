#include "mhcl/config.hpp"

#include <fstream>
#include <sstream>

#include "mhcl/matrix.hpp"

namespace mhcl {

void TrainConfig::validate() const {
  if (d < 1) fail("config", "d must be >= 1");
  if (L > 5) fail("config", "L must be in [0,5]");
  if (!(theta > 0.0 && theta <= 1.0)) fail("config", "theta must be in (0,1]");
  if (!(tau > 0.0) || !(gamma > 0.0)) fail("config", "temperatures must be positive");
  if (!(l_close >= 0.0 && l_close < 1.0)) fail("config", "l_close must be in [0,1)");
  if (alpha < 0.0 || alpha > 0.1) fail("config", "alpha must be in [0, 0.1]");
  if (beta < 0.0 || beta > 0.1) fail("config", "beta must be in [0, 0.1]");
  if (lambda_nrr < 0.0) fail("config", "lambda_nrr must be nonnegative");
  if (weight_decay < 0.0) fail("config", "weight_decay must be nonnegative");
  if (!(lr_decay > 0.0 && lr_decay <= 1.0)) fail("config", "lr_decay must be in (0,1]");
  if (!(dropout >= 0.0 && dropout < 1.0)) fail("config", "dropout must be in [0,1)");
  if (!(dropout_decode >= 0.0 && dropout_decode < 1.0))
    fail("config", "dropout_decode must be in [0,1)");
  if (K < 1) fail("config", "K must be >= 1");
  if (task != "completion" && task != "recommendation")
    fail("config", "task must be completion or recommendation");
  if (main_loss != "bce" && main_loss != "oce")
    fail("config", "main_loss must be bce or oce");
  if (!(leaky_slope > 0.0 && leaky_slope < 1.0))
    fail("config", "leaky_slope must be in (0,1)");
}

std::string TrainConfig::to_text() const {
  std::ostringstream out;
  out << "d=" << d << "\n"
      << "L=" << L << "\n"
      << "K=" << K << "\n"
      << "theta=" << theta << "\n"
      << "lr=" << lr << "\n"
      << "weight_decay=" << weight_decay << "\n"
      << "lr_decay=" << lr_decay << "\n"
      << "dropout=" << dropout << "\n"
      << "dropout_decode=" << dropout_decode << "\n"
      << "alpha=" << alpha << "\n"
      << "beta=" << beta << "\n"
      << "lambda_nrr=" << lambda_nrr << "\n"
      << "tau=" << tau << "\n"
      << "gamma=" << gamma << "\n"
      << "l_close=" << l_close << "\n"
      << "max_epochs=" << max_epochs << "\n"
      << "patience=" << patience << "\n"
      << "seed=" << seed << "\n"
      << "cl_neg_samples=" << cl_neg_samples << "\n"
      << "task=" << task << "\n"
      << "use_hypergraph=" << (use_hypergraph ? "true" : "false") << "\n"
      << "main_loss=" << main_loss << "\n"
      << "bpr_reg=" << bpr_reg << "\n"
      << "leaky_slope=" << leaky_slope << "\n";
  return out.str();
}

TrainConfig TrainConfig::from_text(const std::string& text) {
  TrainConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    // strip whitespace and comments
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    auto b = line.find_first_not_of(" \t");
    if (b == std::string::npos) continue;
    auto e = line.find_last_not_of(" \t");
    line = line.substr(b, e - b + 1);
    auto eq = line.find('=');
    if (eq == std::string::npos)
      fail("config", "line " + std::to_string(lineno) + " is not key=value");
    std::string key = line.substr(0, eq);
    std::string val = line.substr(eq + 1);
    try {
      if (key == "d")
        cfg.d = std::stoull(val);
      else if (key == "L")
        cfg.L = std::stoull(val);
      else if (key == "K")
        cfg.K = std::stoull(val);
      else if (key == "theta")
        cfg.theta = std::stod(val);
      else if (key == "lr")
        cfg.lr = std::stod(val);
      else if (key == "weight_decay")
        cfg.weight_decay = std::stod(val);
      else if (key == "lr_decay")
        cfg.lr_decay = std::stod(val);
      else if (key == "dropout")
        cfg.dropout = std::stod(val);
      else if (key == "dropout_decode")
        cfg.dropout_decode = std::stod(val);
      else if (key == "alpha")
        cfg.alpha = std::stod(val);
      else if (key == "beta")
        cfg.beta = std::stod(val);
      else if (key == "lambda_nrr")
        cfg.lambda_nrr = std::stod(val);
      else if (key == "tau")
        cfg.tau = std::stod(val);
      else if (key == "gamma")
        cfg.gamma = std::stod(val);
      else if (key == "l_close")
        cfg.l_close = std::stod(val);
      else if (key == "max_epochs")
        cfg.max_epochs = std::stoull(val);
      else if (key == "patience")
        cfg.patience = std::stoull(val);
      else if (key == "seed")
        cfg.seed = std::stoull(val);
      else if (key == "cl_neg_samples")
        cfg.cl_neg_samples = std::stoull(val);
      else if (key == "task")
        cfg.task = val;
      else if (key == "use_hypergraph")
        cfg.use_hypergraph = (val == "true" || val == "1");
      else if (key == "main_loss")
        cfg.main_loss = val;
      else if (key == "bpr_reg")
        cfg.bpr_reg = std::stod(val);
      else if (key == "leaky_slope")
        cfg.leaky_slope = std::stod(val);
      else
        fail("config", "unknown key '" + key + "'");
    } catch (const Error&) {
      throw;
    } catch (const std::exception&) {
      fail("config", "bad value for key '" + key + "'");
    }
  }
  cfg.validate();
  return cfg;
}

TrainConfig TrainConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail("io", "cannot open config file " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return from_text(buf.str());
}

}  // namespace mhcl
