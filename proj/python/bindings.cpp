#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cstring>
#include <optional>
#include <string>
#include <vector>

#include "spml/core.hpp"
#include "spml/damp.hpp"
#include "spml/eval.hpp"
#include "spml/experiment.hpp"
#include "spml/gpr_loss.hpp"
#include "spml/score_map.hpp"
#include "spml/scorers.hpp"

namespace py = pybind11;

namespace {

using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

spml::Matrix to_matrix(const DoubleArray& a) {
  if (a.ndim() != 2) throw py::value_error("expected a 2-d array");
  const auto rows = static_cast<std::size_t>(a.shape(0));
  const auto cols = static_cast<std::size_t>(a.shape(1));
  return spml::Matrix(rows, cols, std::vector<double>(a.data(), a.data() + rows * cols));
}

py::array_t<double> to_array(const spml::Matrix& m) {
  py::array_t<double> out({m.rows(), m.cols()});
  std::memcpy(out.mutable_data(), m.values().data(), m.size() * sizeof(double));
  return out;
}

std::vector<spml::AnnotationVector> to_annotations(const std::vector<std::size_t>& positives,
                                                   std::size_t classes) {
  std::vector<spml::AnnotationVector> out;
  for (std::size_t p : positives) out.emplace_back(classes, p);
  return out;
}

std::vector<spml::PseudoLabelVector> to_pseudo(const py::array_t<int, py::array::c_style | py::array::forcecast>& a) {
  if (a.ndim() != 2) throw py::value_error("pseudo-labels must be a 2-d array");
  std::vector<spml::PseudoLabelVector> out;
  const int* data = a.data();
  for (py::ssize_t n = 0; n < a.shape(0); ++n) {
    spml::PseudoLabelVector v(static_cast<std::size_t>(a.shape(1)));
    for (py::ssize_t c = 0; c < a.shape(1); ++c) {
      v[static_cast<std::size_t>(c)] = spml::pseudo_label_from_int(data[n * a.shape(1) + c]);
    }
    out.push_back(std::move(v));
  }
  return out;
}

py::dict loss_to_dict(const spml::LossResult& r) {
  py::dict d;
  d["total"] = r.breakdown.total;
  d["per_case"] = std::vector<double>(r.breakdown.per_case_sums.begin(),
                                      r.breakdown.per_case_sums.end());
  d["regularizer"] = r.breakdown.regularizer_value;
  d["m_hat"] = r.breakdown.m_hat;
  d["logit_gradient"] = to_array(r.logit_gradient);
  return d;
}

py::array_t<float> map_to_array(const spml::SpatialScoreMap& map) {
  py::array_t<float> out({map.height(), map.width(), map.class_count()});
  std::memcpy(out.mutable_data(), map.evidence().data(), map.evidence().size() * sizeof(float));
  return out;
}

spml::SpatialScoreMap array_to_map(
    const py::array_t<float, py::array::c_style | py::array::forcecast>& a) {
  if (a.ndim() != 3) throw py::value_error("score map must be H x W x C");
  return spml::SpatialScoreMap(static_cast<std::size_t>(a.shape(0)),
                               static_cast<std::size_t>(a.shape(1)),
                               static_cast<std::size_t>(a.shape(2)),
                               std::vector<float>(a.data(), a.data() + a.size()));
}

spml::GprConfig gpr_config(const py::kwargs& kw) {
  spml::GprConfig cfg;
  for (const auto& [key, value] : kw) {
    const auto k = key.cast<std::string>();
    const double v = value.cast<double>();
    if (k == "q1") cfg.q1 = v;
    else if (k == "q2") cfg.q2 = v;
    else if (k == "q3") cfg.q3 = v;
    else if (k == "lambda1") cfg.lambda1 = v;
    else if (k == "lambda2") cfg.lambda2 = v;
    else if (k == "eta") cfg.eta = v;
    else if (k == "beta") cfg.beta = v;
    else if (k == "m") cfg.m = v;
    else throw py::key_error("unknown GPR option '" + k + "'");
  }
  cfg.validate();
  return cfg;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Single-positive multi-label learning core";

  py::register_exception<spml::ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<spml::FormatError>(m, "FormatError", PyExc_ValueError);

  m.def("sigmoid", &spml::sigmoid);
  m.def("loss_confirmed_positive", &spml::loss_confirmed_positive);
  m.def("loss_negative_pseudo", &spml::loss_negative_pseudo);
  m.def("loss_positive_pseudo", &spml::loss_positive_pseudo, py::arg("p"), py::arg("q3"));
  m.def(
      "loss_undefined",
      [](double p, double k_hat, double q1, double q2) {
        spml::GprConfig cfg;
        cfg.q1 = q1;
        cfg.q2 = q2;
        return spml::loss_undefined(p, k_hat, cfg);
      },
      py::arg("p"), py::arg("k_hat"), py::arg("q1") = 0.5, py::arg("q2") = 0.5);

  m.def(
      "gpr_loss_batch",
      [](const DoubleArray& logits, const std::vector<std::size_t>& positives,
         const py::array_t<int, py::array::c_style | py::array::forcecast>& pseudo, double mu,
         double sigma, const py::kwargs& kw) {
        const auto preds = spml::PredictionBatch::from_logits(to_matrix(logits));
        const auto ann = to_annotations(positives, preds.class_count());
        const auto labels = to_pseudo(pseudo);
        return loss_to_dict(
            spml::gpr_loss_batch(preds, ann, labels, gpr_config(kw), {mu, sigma}));
      },
      py::arg("logits"), py::arg("positives"), py::arg("pseudo"), py::arg("mu") = 0.1,
      py::arg("sigma") = 0.2, "GPR loss and its gradient w.r.t. the logits");

  m.def(
      "gr_loss_batch",
      [](const DoubleArray& logits, const std::vector<std::size_t>& positives, double mu,
         double sigma, const py::kwargs& kw) {
        const auto preds = spml::PredictionBatch::from_logits(to_matrix(logits));
        const auto ann = to_annotations(positives, preds.class_count());
        return loss_to_dict(spml::gr_loss_batch(preds, ann, gpr_config(kw), {mu, sigma}));
      },
      py::arg("logits"), py::arg("positives"), py::arg("mu") = 0.1, py::arg("sigma") = 0.2);

  m.def(
      "average_precision",
      [](const std::vector<double>& scores, const std::vector<std::uint8_t>& labels) {
        return spml::average_precision(scores, labels);
      },
      py::arg("scores"), py::arg("labels"));

  m.def(
      "mean_average_precision",
      [](const DoubleArray& logits, const py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>& truth) {
        const auto preds = spml::PredictionBatch::from_logits(to_matrix(logits));
        if (truth.ndim() != 2 || static_cast<std::size_t>(truth.shape(0)) != preds.batch_size() ||
            static_cast<std::size_t>(truth.shape(1)) != preds.class_count()) {
          throw py::value_error("truth must match the logits shape");
        }
        std::vector<spml::GroundTruthVector> truths;
        for (std::size_t n = 0; n < preds.batch_size(); ++n) {
          const std::uint8_t* row = truth.data() + n * preds.class_count();
          truths.emplace_back(std::vector<std::uint8_t>(row, row + preds.class_count()));
        }
        return spml::mean_average_precision(preds, truths);
      },
      py::arg("logits"), py::arg("truth"));

  m.def(
      "aggregate_local",
      [](const std::vector<std::vector<double>>& locals, double zeta_local) {
        std::vector<spml::ScoreDistribution> dists;
        for (const auto& l : locals) dists.emplace_back(l);
        return spml::aggregate_local(dists, zeta_local);
      },
      py::arg("locals"), py::arg("zeta_local"));

  m.def(
      "temperature_softmax",
      [](const std::vector<double>& scores, double tau) {
        return spml::temperature_softmax(scores, tau).entries();
      },
      py::arg("scores"), py::arg("tau"));

  m.def("encode_score_map", [](const py::array_t<float, py::array::c_style | py::array::forcecast>& a) {
    const auto bytes = spml::encode_score_map(array_to_map(a));
    return py::bytes(reinterpret_cast<const char*>(bytes.data()), bytes.size());
  });
  m.def("decode_score_map", [](const py::bytes& b) {
    const std::string s = b;
    return map_to_array(spml::decode_score_map(std::vector<std::uint8_t>(s.begin(), s.end())));
  });
  m.def("save_score_map",
        [](const std::filesystem::path& path,
           const py::array_t<float, py::array::c_style | py::array::forcecast>& a) {
          spml::save_score_map(path, array_to_map(a));
        });
  m.def("load_score_map", [](const std::filesystem::path& path) {
    return map_to_array(spml::load_score_map(path));
  });

  m.def(
      "simulate",
      [](const std::filesystem::path& config, const std::filesystem::path& out) {
        const auto cfg = spml::load_experiment_config(config);
        return spml::run_simulate(cfg, out).instance_count;
      },
      py::arg("config"), py::arg("out"));
  m.def(
      "train",
      [](const std::filesystem::path& config, const std::optional<std::filesystem::path>& out) {
        const auto cfg = spml::load_experiment_config(config);
        py::gil_scoped_release release;
        return spml::run_train(cfg, out.value_or(std::filesystem::path())).final_map;
      },
      py::arg("config"), py::arg("out") = py::none(),
      "Train from a config file and return the final validation mAP");
}
