#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "bijou/audio.hpp"
#include "bijou/errors.hpp"
#include "bijou/synthetic.hpp"
#include "bijou/tokenizer.hpp"

namespace py = pybind11;
using namespace bijou;

namespace {

py::dict record_dict(const StepRecord& r) {
  py::dict d;
  d["step"] = r.step;
  d["loss"] = r.loss;
  d["l2"] = r.l2;
  d["mlm"] = r.mlm;
  d["lambda"] = r.lambda;
  d["lr"] = r.lr;
  d["tau"] = r.tau;
  d["target_std"] = r.target_std;
  d["raw_target_std"] = r.raw_target_std;
  d["grad_norm"] = r.grad_norm;
  d["clip_scale"] = r.clip_scale;
  d["examples"] = r.examples;
  d["teacher_forwards"] = r.teacher_forwards;
  d["epoch"] = r.epoch;
  return d;
}

py::array_t<double> to_array(const Tensor& t) {
  py::array_t<double> out(std::vector<py::ssize_t>(t.shape().begin(), t.shape().end()));
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

Example text_example(std::vector<std::int32_t> ids) {
  Example ex;
  ex.tokens = std::move(ids);
  return ex;
}

Example speech_example(py::array_t<double, py::array::c_style | py::array::forcecast> samples) {
  Example ex;
  ex.modality = Modality::speech;
  ex.samples.assign(samples.data(), samples.data() + samples.size());
  return ex;
}

std::vector<double> to_vector(py::array_t<double, py::array::c_style | py::array::forcecast> a) {
  return {a.data(), a.data() + a.size()};
}

}  // namespace

PYBIND11_MODULE(_bijou, m) {
  m.doc() = "Teacher-student masked prediction pretraining for text and speech";

  auto base = py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<DimensionError>(m, "DimensionError", PyExc_ValueError);
  py::register_exception<InputError>(m, "InputError", PyExc_ValueError);
  py::register_exception<DataError>(m, "DataError", PyExc_IOError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);
  py::register_exception<ContractError>(m, "ContractError", PyExc_RuntimeError);
  (void)base;
  m.attr("SAMPLE_RATE") = kSampleRate;

  // Tokenizer
  m.def("normalize", &tok::normalize, py::arg("text"));
  m.def("pretokenize", &tok::pretokenize, py::arg("normalized"));
  py::class_<tok::Tokenizer>(m, "Tokenizer")
      .def_static(
          "train",
          [](const std::vector<std::string>& corpus, std::size_t vocab) { return tok::Tokenizer::train(corpus, vocab); },
          py::arg("corpus"), py::arg("vocab_size"))
      .def_static("load", &tok::Tokenizer::load, py::arg("directory"))
      .def("save", &tok::Tokenizer::save, py::arg("directory"))
      .def("encode", [](const tok::Tokenizer& t, const std::string& s) { return t.encode(s).ids; }, py::arg("text"))
      .def("decode", [](const tok::Tokenizer& t, const std::vector<std::int32_t>& ids) { return t.decode(ids); },
           py::arg("ids"))
      .def("id_of", &tok::Tokenizer::id_of)
      .def_property_readonly("vocab_size", &tok::Tokenizer::vocab_size)
      .def_property_readonly("vocab", &tok::Tokenizer::vocab)
      .def_property_readonly("merges", &tok::Tokenizer::merges);

  // Masking and pre-net arithmetic
  m.def(
      "sample_mask",
      [](std::size_t T, std::size_t length, double ratio, double adjust, std::uint64_t seed) {
        Rng rng(seed);
        return sample_mask(T, {length, ratio, adjust, 1}, rng);
      },
      py::arg("length"), py::arg("span"), py::arg("ratio"), py::arg("adjust") = 0.0, py::arg("seed") = 0);
  m.def("frames_for_samples", &frames_for_samples, py::arg("samples"));
  m.def("min_audio_samples", &min_audio_samples);

  // Schedules
  py::class_<OptimConfig>(m, "OptimConfig")
      .def(py::init<>())
      .def_static("preset", [](const std::string& name) { return TrainConfig::from_preset(name).optim; })
      .def_readwrite("lr_min", &OptimConfig::lr_min)
      .def_readwrite("lr_max", &OptimConfig::lr_max)
      .def_readwrite("warmup_steps", &OptimConfig::warmup_steps)
      .def_readwrite("max_steps", &OptimConfig::max_steps)
      .def_readwrite("clip_norm", &OptimConfig::clip_norm);
  m.def("lr_at", &lr_at, py::arg("step"), py::arg("config"));
  m.def(
      "lambda_at",
      [](std::size_t step, double start, double end, std::size_t steps) {
        return lambda_at(step, {start, end, steps});
      },
      py::arg("step"), py::arg("start") = 20.0, py::arg("end") = 1.0, py::arg("steps") = 250000);
  m.def(
      "ema_decay",
      [](std::size_t step, double start, double end, std::size_t steps) {
        return ema_decay(step, {start, end, steps});
      },
      py::arg("step"), py::arg("start") = 0.999, py::arg("end") = 0.99999, py::arg("anneal_steps") = 75000);

  // Configuration and training
  py::class_<TrainConfig>(m, "TrainConfig")
      .def(py::init<>())
      .def_static("preset", &TrainConfig::from_preset, py::arg("name"))
      .def_static("presets", &TrainConfig::preset_names)
      .def_static("toy_text", &synth::toy_text_config)
      .def_static("parse", &TrainConfig::parse, py::arg("text"))
      .def_static("load", &TrainConfig::load, py::arg("path"))
      .def_static("keys", &TrainConfig::keys)
      .def("get", &TrainConfig::get)
      .def("set", &TrainConfig::set)
      .def("__getitem__", &TrainConfig::get)
      .def("__setitem__", &TrainConfig::set)
      .def("validate", &TrainConfig::validate)
      .def("to_text", &TrainConfig::to_text)
      .def("__repr__", [](const TrainConfig& c) { return "<TrainConfig preset=" + c.preset + ">"; });

  py::class_<Dataset>(m, "Dataset")
      .def_static(
          "load", [](const TrainConfig& c, const std::string& base) { return load_dataset(c, base); },
          py::arg("config"), py::arg("base") = "")
      .def_static(
          "brackets", [](std::size_t n, std::uint64_t seed) { return synth::bracket_dataset(n, seed); },
          py::arg("n"), py::arg("seed") = 0)
      .def_static("from_tokens",
                  [](const std::vector<std::vector<std::int32_t>>& seqs) {
                    Dataset d;
                    for (const auto& s : seqs) d.examples.push_back(text_example(s));
                    return d;
                  })
      .def_property_readonly("modality", [](const Dataset& d) { return std::string(to_string(d.modality)); })
      .def_readonly("skipped", &Dataset::skipped)
      .def("__len__", [](const Dataset& d) { return d.examples.size(); });

  py::class_<Trainer>(m, "Trainer")
      .def(py::init<TrainConfig, Dataset>(), py::arg("config"), py::arg("data"))
      .def_static(
          "resume",
          [](const std::string& path, Dataset data) { return Trainer(Container::load(path), std::move(data)); },
          py::arg("checkpoint"), py::arg("data"))
      .def("step", [](Trainer& t) { return record_dict(t.step()); })
      .def(
          "run",
          [](Trainer& t, const std::string& out_dir, std::optional<std::size_t> stop_at) {
            RunOptions opt;
            opt.out_dir = out_dir;
            opt.stop_at = stop_at;
            const auto r = train(t, opt);
            py::list records;
            for (const auto& rec : r.records) records.append(record_dict(rec));
            return py::make_tuple(r.final_checkpoint.string(), records);
          },
          py::arg("out_dir"), py::arg("stop_at") = py::none())
      .def("save", [](const Trainer& t, const std::string& path) { t.checkpoint().save(path); })
      .def("checkpoint_bytes", [](const Trainer& t) { return py::bytes(t.checkpoint().serialize()); })
      .def_property_readonly("finished", &Trainer::finished)
      .def_property_readonly("steps_done", &Trainer::steps_done)
      .def_property_readonly("ema_updates", &Trainer::ema_updates)
      .def_property_readonly("teacher_forwards", [](const Trainer& t) { return t.teacher().forward_count(); });

  // Export and probing
  py::class_<EncoderBundle>(m, "EncoderBundle")
      .def_static("load", &EncoderBundle::load, py::arg("path"))
      .def_static(
          "from_checkpoint", [](const std::string& path) { return export_encoder(Container::load(path)); },
          py::arg("path"))
      .def_static("random", &EncoderBundle::random, py::arg("config"), py::arg("seed"))
      .def("save", &EncoderBundle::save, py::arg("path"))
      .def("serialize", [](const EncoderBundle& b) { return py::bytes(b.serialize()); })
      .def_property_readonly("width", &EncoderBundle::width)
      .def_property_readonly("parameter_count", &EncoderBundle::parameter_count)
      .def(
          "encode_tokens",
          [](const EncoderBundle& b, std::vector<std::int32_t> ids) {
            return to_array(b.encode(text_example(std::move(ids))).output);
          },
          py::arg("ids"))
      .def(
          "encode_audio",
          [](const EncoderBundle& b, py::array_t<double, py::array::c_style | py::array::forcecast> s) {
            return to_array(b.encode(speech_example(s)).output);
          },
          py::arg("samples"));

  m.def("probe_tasks", &synth::task_names);
  m.def(
      "probe",
      [](const EncoderBundle& bundle, const std::string& task_name, std::uint64_t seed, std::size_t epochs,
         double lr) {
        Rng task_rng(1000 + seed);
        const auto task = synth::make_task(task_name, task_rng);
        Rng head_rng(seed);
        const auto r = fit_probe(bundle, task, {epochs, lr, std::nullopt}, head_rng);
        py::dict d;
        d["train_accuracy"] = r.train_accuracy;
        d["accuracy"] = r.accuracy;
        return d;
      },
      py::arg("bundle"), py::arg("task"), py::arg("seed") = 0, py::arg("epochs") = 200, py::arg("lr") = 1e-2);

  // Audio
  m.def(
      "fingerprint",
      [](py::array_t<double, py::array::c_style | py::array::forcecast> s) {
        const auto v = to_vector(s);
        return fingerprint(v).codes;
      },
      py::arg("samples"));
  m.def(
      "find_duplicates",
      [](const std::vector<std::uint32_t>& a, const std::vector<std::uint32_t>& b, unsigned hamming,
         std::size_t min_run) {
        Fingerprint fa{a}, fb{b};
        std::vector<std::tuple<std::size_t, std::size_t, std::size_t>> out;
        for (const auto& r : find_duplicates(fa, fb, hamming, min_run)) out.emplace_back(r.a_start, r.b_start, r.length);
        return out;
      },
      py::arg("a"), py::arg("b"), py::arg("hamming_max") = kDefaultHammingMax, py::arg("min_run") = kMinDuplicateRun);
  m.def("read_wav", [](const std::string& path) {
    const auto w = read_wav(path);
    py::array_t<double> out(std::vector<py::ssize_t>{static_cast<py::ssize_t>(w.samples.size())});
    auto view = out.mutable_unchecked<1>();
    for (py::ssize_t i = 0; i < view.shape(0); ++i) view(i) = w.samples[static_cast<std::size_t>(i)];
    return out;
  });
  m.def(
      "write_wav", [](const std::string& path, py::array_t<double, py::array::c_style | py::array::forcecast> s) {
        write_wav(path, to_vector(s));
      });
}
