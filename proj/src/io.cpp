#include "modgrok/io.hpp"

#include <bit>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <numbers>
#include <vector>

#include "json.hpp"

#include "modgrok/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint containers assume a little-endian host");

namespace modgrok::io {

namespace {

using nlohmann::json;

void write_matrix_rowmajor(std::ofstream& out, const Eigen::MatrixXd& M) {
    std::vector<double> row(static_cast<std::size_t>(M.cols()));
    for (Eigen::Index r = 0; r < M.rows(); ++r) {
        for (Eigen::Index c = 0; c < M.cols(); ++c) row[static_cast<std::size_t>(c)] = M(r, c);
        out.write(reinterpret_cast<const char*>(row.data()),
                  static_cast<std::streamsize>(row.size() * sizeof(double)));
    }
}

void read_matrix_rowmajor(std::ifstream& in, Eigen::MatrixXd& M, Eigen::Index rows,
                          Eigen::Index cols, const char* what) {
    M.resize(rows, cols);
    std::vector<double> row(static_cast<std::size_t>(cols));
    for (Eigen::Index r = 0; r < rows; ++r) {
        in.read(reinterpret_cast<char*>(row.data()),
                static_cast<std::streamsize>(row.size() * sizeof(double)));
        if (!in) throw IoError(std::string("checkpoint truncated while reading ") + what);
        for (Eigen::Index c = 0; c < cols; ++c) M(r, c) = row[static_cast<std::size_t>(c)];
    }
}

void write_vector(std::ofstream& out, const Eigen::VectorXd& v) {
    out.write(reinterpret_cast<const char*>(v.data()),
              static_cast<std::streamsize>(static_cast<std::size_t>(v.size()) * sizeof(double)));
}

void read_vector(std::ifstream& in, Eigen::VectorXd& v, Eigen::Index n, const char* what) {
    v.resize(n);
    in.read(reinterpret_cast<char*>(v.data()),
            static_cast<std::streamsize>(static_cast<std::size_t>(n) * sizeof(double)));
    if (!in) throw IoError(std::string("checkpoint truncated while reading ") + what);
}

json read_header_line(std::ifstream& in, const std::string& expected_format,
                      const std::filesystem::path& path) {
    std::string line;
    if (!std::getline(in, line))
        throw IoError("cannot read header line from " + path.string());
    json hdr;
    try {
        hdr = json::parse(line);
    } catch (const json::exception& e) {
        throw IoError("bad header in " + path.string() + ": " + e.what());
    }
    if (hdr.value("format", "") != expected_format)
        throw IoError(path.string() + " is not a " + expected_format + " file");
    if (hdr.value("schema_version", 0) != 1)
        throw IoError("unsupported schema_version in " + path.string());
    return hdr;
}

void expect_eof(std::ifstream& in, const std::filesystem::path& path) {
    in.peek();
    if (!in.eof()) throw IoError("trailing bytes in " + path.string());
}

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::ofstream open_out(const std::filesystem::path& path, std::ios::openmode extra = {}) {
    std::ofstream out(path, std::ios::trunc | extra);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    return out;
}

std::ifstream open_in(const std::filesystem::path& path, std::ios::openmode extra = {}) {
    std::ifstream in(path, extra);
    if (!in) throw IoError("cannot open " + path.string());
    return in;
}

} // namespace

void save_checkpoint(const std::filesystem::path& path, const net::NetworkParams& params,
                     const CheckpointMeta& meta, const analytic::PhaseAssignment* phases) {
    if (params.W1.rows() != params.N || params.W1.cols() != 2 * params.p ||
        params.W2.rows() != params.p || params.W2.cols() != params.N)
        throw ShapeError("save_checkpoint: inconsistent parameter shapes");
    if (phases && (phases->phi1.size() != params.N || phases->phi2.size() != params.N ||
                   phases->phi3.size() != params.N))
        throw ShapeError("save_checkpoint: phase vectors must have length N");

    json hdr = {
        {"format", "modgrok-checkpoint"},
        {"schema_version", 1},
        {"p", meta.p},
        {"N", meta.N},
        {"activation", net::to_string(meta.activation)},
        {"scaling", net::to_string(meta.scaling)},
        {"seed", meta.seed},
        {"epoch", meta.epoch},
        {"origin", meta.origin},
        {"has_phases", phases != nullptr},
    };
    if (meta.p != params.p || meta.N != params.N)
        throw ShapeError("save_checkpoint: metadata dimensions disagree with parameters");

    std::ofstream out = open_out(path, std::ios::binary);
    out << hdr.dump() << '\n';
    write_matrix_rowmajor(out, params.W1);
    write_matrix_rowmajor(out, params.W2);
    if (phases) {
        write_vector(out, phases->phi1);
        write_vector(out, phases->phi2);
        write_vector(out, phases->phi3);
    }
    out.flush();
    if (!out) throw IoError("failed writing " + path.string());
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in = open_in(path, std::ios::binary);
    json hdr = read_header_line(in, "modgrok-checkpoint", path);

    LoadedCheckpoint lc;
    lc.meta.p = hdr.at("p").get<int>();
    lc.meta.N = hdr.at("N").get<int>();
    lc.meta.activation = net::activation_from_string(hdr.at("activation").get<std::string>());
    lc.meta.scaling = net::scaling_from_string(hdr.at("scaling").get<std::string>());
    lc.meta.seed = hdr.at("seed").get<std::uint64_t>();
    lc.meta.epoch = hdr.at("epoch").get<long>();
    lc.meta.origin = hdr.at("origin").get<std::string>();
    if (lc.meta.p < 2 || lc.meta.N < 1) throw IoError("invalid dimensions in " + path.string());

    lc.params.p = lc.meta.p;
    lc.params.N = lc.meta.N;
    lc.params.activation = lc.meta.activation;
    lc.params.scaling = lc.meta.scaling;
    read_matrix_rowmajor(in, lc.params.W1, lc.meta.N, 2 * lc.meta.p, "W1");
    read_matrix_rowmajor(in, lc.params.W2, lc.meta.p, lc.meta.N, "W2");
    if (hdr.at("has_phases").get<bool>()) {
        analytic::PhaseAssignment ph;
        read_vector(in, ph.phi1, lc.meta.N, "phi1");
        read_vector(in, ph.phi2, lc.meta.N, "phi2");
        read_vector(in, ph.phi3, lc.meta.N, "phi3");
        lc.phases = std::move(ph);
    }
    expect_eof(in, path);
    return lc;
}

void save_optimizer_state(const std::filesystem::path& path, const train::OptimizerState& state) {
    const bool has_m = state.mW1.size() > 0;
    const bool has_v = state.vW1.size() > 0;
    const Eigen::MatrixXd& shape1 = has_m ? state.mW1 : state.vW1;
    const Eigen::MatrixXd& shape2 = has_m ? state.mW2 : state.vW2;
    json hdr = {
        {"format", "modgrok-optstate"},
        {"schema_version", 1},
        {"step", state.step},
        {"has_m", has_m},
        {"has_v", has_v},
        {"rows1", has_m || has_v ? shape1.rows() : 0},
        {"cols1", has_m || has_v ? shape1.cols() : 0},
        {"rows2", has_m || has_v ? shape2.rows() : 0},
        {"cols2", has_m || has_v ? shape2.cols() : 0},
    };
    std::ofstream out = open_out(path, std::ios::binary);
    out << hdr.dump() << '\n';
    if (has_m) {
        write_matrix_rowmajor(out, state.mW1);
        write_matrix_rowmajor(out, state.mW2);
    }
    if (has_v) {
        write_matrix_rowmajor(out, state.vW1);
        write_matrix_rowmajor(out, state.vW2);
    }
    out.flush();
    if (!out) throw IoError("failed writing " + path.string());
}

train::OptimizerState load_optimizer_state(const std::filesystem::path& path) {
    std::ifstream in = open_in(path, std::ios::binary);
    json hdr = read_header_line(in, "modgrok-optstate", path);
    train::OptimizerState state;
    state.step = hdr.at("step").get<long>();
    const auto r1 = hdr.at("rows1").get<Eigen::Index>();
    const auto c1 = hdr.at("cols1").get<Eigen::Index>();
    const auto r2 = hdr.at("rows2").get<Eigen::Index>();
    const auto c2 = hdr.at("cols2").get<Eigen::Index>();
    if (hdr.at("has_m").get<bool>()) {
        read_matrix_rowmajor(in, state.mW1, r1, c1, "mW1");
        read_matrix_rowmajor(in, state.mW2, r2, c2, "mW2");
    }
    if (hdr.at("has_v").get<bool>()) {
        read_matrix_rowmajor(in, state.vW1, r1, c1, "vW1");
        read_matrix_rowmajor(in, state.vW2, r2, c2, "vW2");
    }
    expect_eof(in, path);
    return state;
}

void write_record_csv(const std::filesystem::path& path, const train::TrainRecord& record) {
    std::ofstream out = open_out(path);
    out << "# schema_version=1\n";
    out << "epoch,train_loss,test_loss,train_acc,test_acc,w1_norm,w2_norm,g1_norm,g2_norm,avg_ipr2\n";
    for (const auto& r : record.rows) {
        out << r.epoch << ',' << fmt_double(r.train_loss) << ',' << fmt_double(r.test_loss) << ','
            << fmt_double(r.train_acc) << ',' << fmt_double(r.test_acc) << ','
            << fmt_double(r.w1_norm) << ',' << fmt_double(r.w2_norm) << ','
            << fmt_double(r.g1_norm) << ',' << fmt_double(r.g2_norm) << ','
            << fmt_double(r.avg_ipr2) << '\n';
    }
    out.flush();
    if (!out) throw IoError("failed writing " + path.string());
}

train::TrainRecord read_record_csv(const std::filesystem::path& path) {
    std::ifstream in = open_in(path);
    std::string line;
    if (!std::getline(in, line) || line.rfind("# schema_version=1", 0) != 0)
        throw IoError("missing schema comment in " + path.string());
    if (!std::getline(in, line) || line.rfind("epoch,train_loss", 0) != 0)
        throw IoError("missing column header in " + path.string());
    train::TrainRecord rec;
    long prev_epoch = -1;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        train::RecordRow r;
        double epoch_val = 0;
        double* fields[10] = {&epoch_val,   &r.train_loss, &r.test_loss, &r.train_acc,
                              &r.test_acc,  &r.w1_norm,    &r.w2_norm,   &r.g1_norm,
                              &r.g2_norm,   &r.avg_ipr2};
        const char* s = line.c_str();
        for (int i = 0; i < 10; ++i) {
            char* end = nullptr;
            *fields[i] = std::strtod(s, &end);
            if (end == s) throw IoError("bad row in " + path.string() + ": " + line);
            s = end;
            if (i < 9) {
                if (*s != ',') throw IoError("bad row in " + path.string() + ": " + line);
                ++s;
            }
        }
        r.epoch = static_cast<long>(epoch_val);
        if (r.epoch <= prev_epoch)
            throw IoError("epochs not strictly increasing in " + path.string());
        prev_epoch = r.epoch;
        rec.rows.push_back(r);
    }
    return rec;
}

void write_spectra_csv(const std::filesystem::path& path, const net::NetworkParams& params) {
    analysis::DftPlan plan(params.p);
    std::ofstream out = open_out(path);
    out << "# schema_version=1\n";
    out << "neuron,raw_power,ipr2,dom_freq_slot1,dom_freq_slot2,degenerate_slot1,degenerate_slot2,"
           "phase_slot1,phase_slot2,fit_residual";
    for (int nu = 0; nu < 2 * params.p; ++nu) out << ",mag_" << nu;
    out << '\n';
    for (int k = 0; k < params.N; ++k) {
        analysis::SpectralProfile prof = analysis::weight_spectrum(params, k, plan);
        out << k << ',' << fmt_double(prof.raw_power) << ',' << fmt_double(prof.ipr(2.0)) << ','
            << prof.dominant_freq[0] << ',' << prof.dominant_freq[1] << ','
            << (prof.degenerate[0] ? 1 : 0) << ',' << (prof.degenerate[1] ? 1 : 0) << ','
            << fmt_double(prof.extracted_phase[0]) << ',' << fmt_double(prof.extracted_phase[1])
            << ',' << fmt_double(prof.fit_residual);
        char buf[24];
        for (Eigen::Index i = 0; i < prof.magnitudes.size(); ++i) {
            std::snprintf(buf, sizeof buf, ",%.10g", prof.magnitudes[i]);
            out << buf;
        }
        out << '\n';
    }
    out.flush();
    if (!out) throw IoError("failed writing " + path.string());
}

void write_phase_csv(const std::filesystem::path& path, const analysis::PhaseReport& report) {
    std::ofstream out = open_out(path);
    out << "# schema_version=1\n";
    out << "neuron,freq,phi1,phi2,phi3,residual\n";
    for (const auto& t : report.neurons)
        out << t.neuron << ',' << t.freq << ',' << fmt_double(t.phi1) << ',' << fmt_double(t.phi2)
            << ',' << fmt_double(t.phi3) << ',' << fmt_double(t.residual) << '\n';
    out.flush();
    if (!out) throw IoError("failed writing " + path.string());
}

void write_phase_summary_json(const std::filesystem::path& path,
                              const analysis::PhaseReport& report) {
    json j = {
        {"schema_version", 1},
        {"included", report.neurons.size()},
        {"excluded", report.excluded},
        {"bins", report.bins},
        {"margin", report.margin},
        {"histogram", report.histogram},
        {"mass_within_pi_over_8",
         analysis::residual_mass_within(report, std::numbers::pi / 8.0)},
    };
    std::ofstream out = open_out(path);
    out << j.dump(2) << '\n';
    out.flush();
    if (!out) throw IoError("failed writing " + path.string());
}

void write_map_csv(const std::filesystem::path& path, const Eigen::MatrixXd& matrix,
                   int p, int layer, int index, const std::string& kind) {
    json hdr = {{"schema_version", 1}, {"p", p}, {"layer", layer}, {"index", index}, {"kind", kind}};
    std::ofstream out = open_out(path);
    out << hdr.dump() << '\n';
    for (Eigen::Index r = 0; r < matrix.rows(); ++r) {
        for (Eigen::Index c = 0; c < matrix.cols(); ++c) {
            if (c) out << ',';
            out << fmt_double(matrix(r, c));
        }
        out << '\n';
    }
    out.flush();
    if (!out) throw IoError("failed writing " + path.string());
}

} // namespace modgrok::io
