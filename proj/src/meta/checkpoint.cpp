#include "paml/meta/checkpoint.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>

namespace paml::meta {
namespace {

void write_params(std::ostream& out, const char* tag, const ParamSet<double>& p) {
  if (p.empty()) return;
  out << "params " << tag << ' ' << p.layout()->size() << '\n';
  for (Index b = 0; b < p.layout()->size(); ++b) {
    const Block& blk = p.layout()->block(b);
    out << blk.name << ' ' << blk.rows << ' ' << blk.cols;
    const auto m = p.block(b);
    char buf[64];
    for (Index k = 0; k < m.size(); ++k) {
      std::snprintf(buf, sizeof buf, " %a", m.data()[k]);
      out << buf;
    }
    out << '\n';
  }
}

double read_hex(std::istream& in, const std::string& where) {
  std::string tok;
  if (!(in >> tok)) throw DataError(where + ": truncated");
  char* end = nullptr;
  const double v = std::strtod(tok.c_str(), &end);
  if (end == tok.c_str() || *end != '\0') throw DataError(where + ": bad number '" + tok + "'");
  return v;
}

void read_params(std::istream& in, const std::string& where, ParamSet<double>& p) {
  Index n = 0;
  in >> n;
  if (p.empty() || n != p.layout()->size()) throw DataError(where + ": parameter blocks do not match the model");
  for (Index b = 0; b < n; ++b) {
    const Block& blk = p.layout()->block(b);
    std::string name;
    Index rows = 0, cols = 0;
    in >> name >> rows >> cols;
    if (name != blk.name || rows != blk.rows || cols != blk.cols)
      throw DataError(where + ": block '" + name + "' does not match '" + blk.name + "'");
    auto m = p.block(b);
    for (Index k = 0; k < m.size(); ++k) m.data()[k] = read_hex(in, where);
  }
}

}  // namespace

void save_checkpoint(const TrainedModel& model, const std::filesystem::path& path, std::uint64_t config_hash) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  char hash[32];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(config_hash));
  out << "paml-checkpoint 1\n";
  out << "config_hash " << hash << '\n';
  out << "algorithm " << to_string(model.config.algorithm) << '\n';
  out << "best_epoch " << model.best_epoch << '\n';
  write_params(out, "theta", model.theta);
  write_params(out, "psi", model.psi);
  if (model.meta_sgd.size() > 0) {
    out << "rates " << model.meta_sgd.size();
    char buf[64];
    for (Index k = 0; k < model.meta_sgd.size(); ++k) {
      std::snprintf(buf, sizeof buf, " %a", model.meta_sgd(k));
      out << buf;
    }
    out << '\n';
  }
  out << "end\n";
  if (!out) throw DataError("failed writing " + path.string());
}

std::uint64_t load_checkpoint(const std::filesystem::path& path, TrainedModel& model) {
  const std::string where = path.string();
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + where);
  std::string magic, key, value;
  int version = 0;
  in >> magic >> version;
  if (magic != "paml-checkpoint" || version != 1) throw DataError(where + ": not a checkpoint");
  std::uint64_t hash = 0;
  while (in >> key) {
    if (key == "end") return hash;
    if (key == "config_hash") {
      in >> value;
      hash = std::strtoull(value.c_str(), nullptr, 16);
    } else if (key == "algorithm") {
      in >> value;
      if (parse_algorithm(value) != model.config.algorithm) throw DataError(where + ": algorithm mismatch");
    } else if (key == "best_epoch") {
      in >> model.best_epoch;
    } else if (key == "params") {
      in >> value;
      if (value == "theta")
        read_params(in, where, model.theta);
      else if (value == "psi")
        read_params(in, where, model.psi);
      else
        throw DataError(where + ": unknown parameter group '" + value + "'");
    } else if (key == "rates") {
      Index n = 0;
      in >> n;
      if (n != model.meta_sgd.size()) throw DataError(where + ": rate vector length mismatch");
      for (Index k = 0; k < n; ++k) model.meta_sgd(k) = read_hex(in, where);
    } else {
      throw DataError(where + ": unexpected key '" + key + "'");
    }
  }
  throw DataError(where + ": missing end marker");
}

}  // namespace paml::meta
