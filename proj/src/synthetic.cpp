#include "lithoroute/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <random>
#include <sstream>
#include <vector>

#include "lithoroute/common.hpp"

namespace lithoroute {

namespace {

constexpr const char* kClasses[9] = {"SS", "CSiS", "FSiS", "SiSh", "MS", "WS", "D", "PS", "BS"};
constexpr std::size_t kWellLengths[7] = {480, 470, 460, 450, 440, 432, 432};

double uniform01(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * (1.0 / 9007199254740992.0);
}

double gauss(std::mt19937_64& rng) {
    const double u1 = std::max(uniform01(rng), 1e-12);
    const double u2 = uniform01(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

struct ChannelModel {
    const char* name;
    double mu[9];
    double sigma;
};

// Class-conditional levels loosely shaped like wireline responses: clean
// sands read low on gamma, carbonates high on photoelectric factor.
const ChannelModel kChannels[5] = {
    {"GR", {55, 66, 74, 86, 79, 71, 44, 61, 82}, 8.0},
    {"ILD_log10", {0.50, 0.56, 0.61, 0.72, 0.76, 0.81, 0.92, 0.85, 0.70}, 0.08},
    {"DeltaPHI", {4.5, 3.5, 2.6, 1.0, 0.5, 1.5, 3.0, 2.1, 0.8}, 1.2},
    {"PHIND", {12.0, 13.0, 14.0, 11.0, 10.0, 12.0, 6.0, 9.0, 8.0}, 2.0},
    {"PE", {3.0, 3.2, 3.4, 3.8, 4.2, 4.6, 5.2, 4.9, 4.4}, 0.5},
};

}  // namespace

std::string demo_facies_csv(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::ostringstream os;
    os << "Well Name,Depth,GR,ILD_log10,DeltaPHI,PHIND,PE,NM_M,RELPOS,Facies\n";

    for (std::size_t w = 0; w < 7; ++w) {
        const std::size_t length = kWellLengths[w];
        const std::string well = "W" + std::to_string(w + 1);
        const double top = 2793.0 + 41.0 * static_cast<double>(w);

        // Markov labels: sticky with small moves to adjacent classes.
        std::vector<int> labels(length);
        int state = static_cast<int>((w * 2) % 9);
        for (std::size_t i = 0; i < length; ++i) {
            labels[i] = state;
            const double u = uniform01(rng);
            if (u > 0.88) {
                const bool up = u > 0.94;
                int next = state + (up ? 1 : -1);
                if (next >= 0 && next < 9) state = next;
            }
        }

        // AR(1) drift per channel on top of the class-conditional level.
        double drift[5] = {0, 0, 0, 0, 0};
        std::vector<std::array<double, 5>> values(length);
        for (std::size_t i = 0; i < length; ++i) {
            for (std::size_t c = 0; c < 5; ++c) {
                drift[c] = 0.75 * drift[c] + 0.45 * kChannels[c].sigma * gauss(rng);
                values[i][c] =
                    kChannels[c].mu[labels[i]] + drift[c] + 0.80 * kChannels[c].sigma * gauss(rng);
            }
        }

        // RELPOS: position inside the current lithology run, 1.0 at its top.
        std::vector<double> relpos(length, 1.0);
        std::size_t run_start = 0;
        for (std::size_t i = 1; i <= length; ++i) {
            if (i == length || labels[i] != labels[run_start]) {
                const std::size_t run_len = i - run_start;
                for (std::size_t j = 0; j < run_len; ++j)
                    relpos[run_start + j] = static_cast<double>(run_len - j) /
                                            static_cast<double>(run_len);
                run_start = i;
            }
        }

        for (std::size_t i = 0; i < length; ++i) {
            os << well << "," << format_fixed(top + 0.5 * static_cast<double>(i), 1);
            for (std::size_t c = 0; c < 5; ++c) {
                // A few deterministic holes in PE exercise the imputation path.
                if (c == 4 && (w == 2 || w == 4) && i % 97 == 13) {
                    os << ",";
                    continue;
                }
                os << "," << format_fixed(values[i][c], 4);
            }
            os << "," << (labels[i] <= 2 ? 1 : 2);
            os << "," << format_fixed(relpos[i], 3);
            os << "," << kClasses[labels[i]];
            os << "\n";
        }
    }
    return os.str();
}

std::string demo_mapping_text() {
    return "# Column roles for the demo lithology table.\n"
           "well_id = Well Name\n"
           "depth = Depth\n"
           "channel:GR = GR\n"
           "channel:ILD_log10 = ILD_log10\n"
           "channel:DeltaPHI = DeltaPHI\n"
           "channel:PHIND = PHIND\n"
           "channel:PE = PE\n"
           "channel:NM_M = NM_M\n"
           "channel:RELPOS = RELPOS\n"
           "label = Facies\n"
           "labels = SS, CSiS, FSiS, SiSh, MS, WS, D, PS, BS\n";
}

std::string demo_knowledge_base_text() {
    return
        "# Starter knowledge base for the nine-class lithology schema.\n"
        "FEATURE GR\n"
        "Gamma ray in API units. Clays and shales read high; clean sandstones and carbonates "
        "read low.\n"
        "FEATURE ILD_log10\n"
        "Log10 of deep induction resistivity. Tight carbonates and hydrocarbon-bearing rock "
        "read high; brine-filled porous rock reads low.\n"
        "FEATURE DeltaPHI\n"
        "Neutron-density porosity difference. Large positive separation points at shaliness or "
        "gas effect; near zero in clean consolidated rock.\n"
        "FEATURE PHIND\n"
        "Average neutron-density porosity. High in porous sandstones, low in tight dolomite.\n"
        "FEATURE PE\n"
        "Photoelectric factor. Quartz sits near 2, calcite near 5, dolomite near 3; a strong "
        "lithology discriminator.\n"
        "FEATURE NM_M\n"
        "Depositional group indicator: 1 nonmarine, 2 marine. Nonmarine rules out the marine "
        "classes and vice versa.\n"
        "FEATURE RELPOS\n"
        "Relative position inside the current lithology interval, 1.0 at its top, decreasing "
        "downward.\n"
        "LABEL SS\n"
        "Nonmarine sandstone: low GR, high porosity, PE near quartz.\n"
        "LABEL CSiS\n"
        "Nonmarine coarse siltstone: GR between sandstone and fine siltstone, moderate "
        "porosity.\n"
        "LABEL FSiS\n"
        "Nonmarine fine siltstone: higher GR than coarse siltstone, slightly lower porosity.\n"
        "LABEL SiSh\n"
        "Marine siltstone and shale: high GR, low porosity, onset of the marine group.\n"
        "LABEL MS\n"
        "Mudstone: very high GR, low porosity, high resistivity scatter.\n"
        "LABEL WS\n"
        "Wackestone: carbonate mud with grains; intermediate PE, low-to-moderate porosity.\n"
        "LABEL D\n"
        "Dolomite: low GR, very low porosity, high resistivity, PE near 3.\n"
        "LABEL PS\n"
        "Packstone to grainstone: grain-supported carbonate, PE near calcite, moderate "
        "porosity.\n"
        "LABEL BS\n"
        "Bafflestone: boundstone fabric, high GR scatter, PE between calcite and dolomite.\n"
        "GUIDELINE 1\n"
        "Respect the NM_M group: labels SS, CSiS, FSiS are nonmarine (NM_M = 1); the rest are "
        "marine (NM_M = 2).\n"
        "GUIDELINE 2\n"
        "Lithology is continuous along depth; a single-depth label switch inside a uniform "
        "interval is rarely real.\n"
        "GUIDELINE 3\n"
        "Siliciclastic classes (SS, CSiS, FSiS) sit near PE 2-3; carbonates (WS, D, PS, BS) "
        "sit near PE 4-5.\n"
        "GUIDELINE 4\n"
        "Neighbouring classes in the sequence SS-CSiS-FSiS and SiSh-MS-WS-D-PS-BS are easy to "
        "confuse; prefer the one matching the trend of GR and PHIND.\n"
        "GUIDELINE 5\n"
        "RELPOS near 1.0 marks the top of an interval; label changes are most plausible "
        "there.\n";
}

std::string demo_config_text(const std::string& dir) {
    std::ostringstream os;
    os << "# Demo pipeline over the bundled lithology table.\n";
    os << "[data]\n";
    os << "csv = " << dir << "/demo.csv\n";
    os << "mapping = " << dir << "/mapping.conf\n";
    os << "kb = " << dir << "/kb.txt\n";
    os << "guidelines = " << dir << "/guidelines.txt\n";
    os << "\n[split]\n";
    os << "train = W1, W2, W3, W4\n";
    os << "val = W5, W6\n";
    os << "test = W7\n";
    os << "\n[base]\n";
    os << "model = mlp\n";
    os << "window = 16\n";
    os << "hidden = 128\n";
    os << "epochs = 40\n";
    os << "\n[routing]\n";
    os << "epsilon = 0.1\n";
    os << "\n[tools]\n";
    os << "delta = 8\n";
    os << "k = 5\n";
    os << "h = 4\n";
    os << "\n[reasoning]\n";
    os << "window = 4\n";
    os << "\n[sampling]\n";
    os << "temperature = 0.6\n";
    os << "top_p = 0.7\n";
    os << "max_tokens = 8192\n";
    os << "votes = 3\n";
    os << "\n[backend]\n";
    os << "kind = mock\n";
    os << "\n[refine]\n";
    os << "mode = llm\n";
    os << "min_run = 2\n";
    os << "\n[run]\n";
    os << "dir = " << dir << "/runs\n";
    os << "seed = 7\n";
    return os.str();
}

void write_demo_workspace(const std::string& dir, std::uint64_t seed) {
    std::filesystem::create_directories(dir);
    write_text_file(dir + "/demo.csv", demo_facies_csv(seed));
    write_text_file(dir + "/mapping.conf", demo_mapping_text());
    write_text_file(dir + "/kb.txt", demo_knowledge_base_text());
    write_text_file(
        dir + "/guidelines.txt",
        "# One refinement rule per line.\n"
        "Lithology is continuous along depth; prefer runs several steps long over isolated "
        "single-depth switches.\n"
        "A label change should line up with a visible shift in the measurements; keep "
        "boundaries where the curves actually move.\n"
        "Respect the NM_M group split: nonmarine and marine classes do not interleave depth "
        "by depth.\n"
        "When candidates disagree at one depth but agree around it, side with the label that "
        "preserves the enclosing run.\n");
    write_text_file(dir + "/pipeline.conf", demo_config_text(dir));
}

}  // namespace lithoroute
