#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "obr/config.hpp"
#include "obr/evaluation.hpp"
#include "obr/pipeline.hpp"
#include "obr/png_io.hpp"
#include "obr/synth.hpp"

namespace py = pybind11;
using namespace obr;

namespace {

using U8Array = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;

RasterImage image_from_numpy(const U8Array& a)
{
    if (a.ndim() != 2 && !(a.ndim() == 3 && (a.shape(2) == 1 || a.shape(2) == 3)))
        throw InputError("expected an HxW or HxWxC uint8 array with C in {1, 3}");
    const int h = static_cast<int>(a.shape(0)), w = static_cast<int>(a.shape(1));
    const int c = a.ndim() == 2 ? 1 : static_cast<int>(a.shape(2));
    RasterImage img(w, h, c);
    std::copy(a.data(), a.data() + a.size(), img.pixels().begin());
    return img;
}

U8Array image_to_numpy(const RasterImage& img)
{
    std::vector<py::ssize_t> shape{img.height(), img.width()};
    if (img.channels() > 1) shape.push_back(img.channels());
    U8Array out(shape);
    std::copy(img.pixels().begin(), img.pixels().end(), out.mutable_data());
    return out;
}

py::array_t<float> tensor_to_numpy(const Tensor<float>& t)
{
    py::array_t<float> out({t.channels(), t.height(), t.width()});
    std::copy(t.data().begin(), t.data().end(), out.mutable_data());
    return out;
}

py::dict detection_dict(const Detection& d)
{
    py::dict item;
    item["left"] = d.box.left;
    item["top"] = d.box.top;
    item["right"] = d.box.right;
    item["bottom"] = d.box.bottom;
    item["dots"] = decode(d.cls).to_string();
    item["score"] = d.score;
    return item;
}

}  // namespace

PYBIND11_MODULE(_obr, m)
{
    m.doc() = "Optical Braille recognition core";

    py::register_exception<InputError>(m, "InputError", PyExc_ValueError);
    py::register_exception<ModelError>(m, "ModelError", PyExc_RuntimeError);

    // codec
    m.def("encode", [](const std::string& dots) { return encode(DotPattern::parse(dots)).value(); }, py::arg("dots"),
          "Dot string such as \"124\" -> class 1..63.");
    m.def("decode", [](int cls) { return decode(ClassId(cls)).to_string(); }, py::arg("cls"));
    m.def("mirror", [](int cls) { return mirror(ClassId(cls)).value(); }, py::arg("cls"));
    m.def("to_unicode", [](int cls) { return to_unicode(ClassId(cls)); }, py::arg("cls"));

    // geometry
    py::class_<Box>(m, "Box")
        .def(py::init<double, double, double, double>(), py::arg("left"), py::arg("top"), py::arg("right"),
             py::arg("bottom"))
        .def_readwrite("left", &Box::left)
        .def_readwrite("top", &Box::top)
        .def_readwrite("right", &Box::right)
        .def_readwrite("bottom", &Box::bottom)
        .def("__repr__", [](const Box& b) {
            return "Box(" + std::to_string(b.left) + ", " + std::to_string(b.top) + ", " + std::to_string(b.right) +
                   ", " + std::to_string(b.bottom) + ")";
        });
    m.def("iou", &iou, py::arg("a"), py::arg("b"));
    m.def(
        "nms",
        [](const std::vector<Box>& boxes, const std::vector<int>& classes, const std::vector<double>& scores,
           double threshold) {
            if (boxes.size() != classes.size() || boxes.size() != scores.size())
                throw InputError("boxes, classes and scores differ in length");
            std::vector<Detection> dets;
            for (std::size_t i = 0; i < boxes.size(); ++i) dets.push_back({boxes[i], ClassId(classes[i]), scores[i]});
            std::vector<Box> kept;
            for (const auto& d : nms(dets, threshold)) kept.push_back(d.box);
            return kept;
        },
        py::arg("boxes"), py::arg("classes"), py::arg("scores"), py::arg("threshold"),
        "Greedy class-agnostic suppression; returns the kept boxes by descending score.");

    // imaging
    m.def("normalize", [](const U8Array& a) { return tensor_to_numpy(normalize(image_from_numpy(a))); },
          py::arg("image"), "uint8 HxW[xC] -> float32 CxHxW, zero mean, std 1/3 per channel.");
    m.def("read_png", [](const std::filesystem::path& p) { return image_to_numpy(read_png(p)); }, py::arg("path"));
    m.def("write_png", [](const std::filesystem::path& p, const U8Array& a) { write_png(p, image_from_numpy(a)); },
          py::arg("path"), py::arg("image"));

    // synthetic pages
    m.def(
        "render_page",
        [](int seed, double rotation, double noise_sigma) {
            PageGeometry g;
            SynthOptions o;
            o.rotation_deg = rotation;
            o.noise_sigma = noise_sigma;
            const auto text = random_braille_text(g.rows(), g.columns(), static_cast<std::uint64_t>(seed));
            SyntheticPage page = render_synthetic_page(text, g, o, static_cast<std::uint64_t>(seed) + 1);
            py::list chars;
            for (const auto& c : page.annotation.chars) {
                py::dict item;
                item["box"] = c.box;
                item["dots"] = decode(c.cls).to_string();
                chars.append(item);
            }
            return py::make_tuple(image_to_numpy(page.image), chars);
        },
        py::arg("seed"), py::arg("rotation") = 0.0, py::arg("noise_sigma") = 4.0,
        "Random-text synthetic page -> (image, [{box, dots}]).");

    // model
    py::class_<Detector>(m, "Detector")
        .def_static(
            "load", [](const std::filesystem::path& p) { return load_checkpoint(p).detector; }, py::arg("path"))
        .def_static(
            "untrained",
            [](const std::string& preset, int seed) {
                return Detector(preset_config(preset).detector, static_cast<std::uint64_t>(seed));
            },
            py::arg("preset") = "desk", py::arg("seed") = 0)
        .def("save", [](const Detector& d, const std::filesystem::path& p) { save_checkpoint(p, d); }, py::arg("path"))
        .def_property_readonly("parameter_count", [](const Detector& d) { return d.network().parameter_count(); })
        .def(
            "detect",
            [](const Detector& d, const U8Array& image, int width, std::optional<double> threshold) {
                const RasterImage img = image_from_numpy(image);
                std::vector<Detection> dets;
                {
                    py::gil_scoped_release release;
                    dets = detect_page(d, img, width, threshold.value_or(d.config().score_threshold));
                }
                py::list out;
                for (const auto& det : dets) out.append(detection_dict(det));
                return out;
            },
            py::arg("image"), py::arg("width") = 864, py::arg("score_threshold") = py::none())
        .def(
            "recognize",
            [](const Detector& d, const U8Array& image, int width, std::optional<double> threshold,
               std::optional<std::filesystem::path> alphabet) {
                const AlphabetTable table = alphabet ? AlphabetTable::load(*alphabet) : AlphabetTable{};
                return recognize(d, image_from_numpy(image), table, width,
                                 threshold.value_or(d.config().score_threshold))
                    .text;
            },
            py::arg("image"), py::arg("width") = 864, py::arg("score_threshold") = py::none(),
            py::arg("alphabet") = py::none(), "Text of the page; unmapped classes come out as Unicode Braille.");

    // evaluation
    m.def(
        "evaluate",
        [](const std::vector<std::pair<std::vector<Box>, std::vector<std::string>>>& detections,
           const std::vector<std::pair<std::vector<Box>, std::vector<std::string>>>& truth) {
            if (detections.size() != truth.size()) throw InputError("detections and truth differ in page count");
            std::vector<PageEvaluation> pages;
            for (std::size_t i = 0; i < truth.size(); ++i) {
                PageEvaluation p{std::to_string(i), {}, {}};
                const auto& [dboxes, ddots] = detections[i];
                const auto& [tboxes, tdots] = truth[i];
                if (dboxes.size() != ddots.size() || tboxes.size() != tdots.size())
                    throw InputError("boxes and dots differ in length");
                // Earlier entries rank first.
                for (std::size_t k = 0; k < dboxes.size(); ++k)
                    p.detections.push_back({dboxes[k], encode(DotPattern::parse(ddots[k])),
                                            1.0 - static_cast<double>(k) / (dboxes.size() + 1.0)});
                for (std::size_t k = 0; k < tboxes.size(); ++k)
                    p.truth.push_back({tboxes[k], encode(DotPattern::parse(tdots[k]))});
                pages.push_back(std::move(p));
            }
            const EvalReport r = evaluate_corpus(pages);
            py::dict out;
            for (auto [name, s] : {std::pair{"char", r.char_scores}, std::pair{"dot", r.dot_scores}}) {
                out[(std::string(name) + "_precision").c_str()] = s.precision;
                out[(std::string(name) + "_recall").c_str()] = s.recall;
                out[(std::string(name) + "_f1").c_str()] = s.f1;
            }
            return out;
        },
        py::arg("detections"), py::arg("truth"),
        "Pages of (boxes, dot strings); detections in descending score order.");

    m.def("default_config", [](const std::string& preset) { return format_config(preset_config(preset)); },
          py::arg("preset") = "paper");
}
