// Template grammar for the synthetic chest X-ray corpus.
//
// Every line has one or more prior-free renderings. With probability
// prior_line_rate a line is instead rendered in one of three prior-referencing
// shapes:
//   prefix   "Compared to the prior study, <free line>"   (partial)
//   verb     "<Subject> has worsened" / "The lungs remain clear"  (partial)
//   pure     "Heart size is stable"                        (all)
// The prior-free vocabulary never contains a prior-exam keyword.

#include <algorithm>

#include "reportdpo/corpus.hpp"
#include "reportdpo/rng.hpp"
#include "reportdpo/text.hpp"

namespace reportdpo::corpus {

namespace {

struct LineTemplate {
    std::vector<std::string> free_forms;
    std::string subject;  // set when free_forms[0] == subject + " is/are present"
    bool plural = false;
    std::vector<std::string> all_forms;
};

LineTemplate with_subject(std::string subject, std::vector<std::string> alternates,
                          std::vector<std::string> all_forms, bool plural = false) {
    LineTemplate t;
    t.free_forms.push_back(subject + (plural ? " are present" : " is present"));
    for (auto& a : alternates) {
        t.free_forms.push_back(std::move(a));
    }
    t.subject = std::move(subject);
    t.plural = plural;
    t.all_forms = std::move(all_forms);
    return t;
}

LineTemplate plain(std::vector<std::string> free_forms, std::vector<std::string> all_forms) {
    LineTemplate t;
    t.free_forms = std::move(free_forms);
    t.all_forms = std::move(all_forms);
    return t;
}

std::string lower_first(std::string s) {
    if (!s.empty()) {
        s[0] = static_cast<char>(std::tolower(static_cast<unsigned char>(s[0])));
    }
    return s;
}

const std::vector<std::string> kPrefixes{
    "Compared to the prior study,",
    "Compared to the prior exam,",
    "In comparison with the prior radiograph,",
};

const std::vector<std::string> kSingularVerbs{"has worsened", "has improved", "has increased"};
const std::vector<std::string> kPluralVerbs{"have worsened", "have improved", "have increased"};

LineTruth render_line(Rng& rng, const LineTemplate& t, double prior_rate, bool in_findings) {
    LineTruth out;
    out.in_findings = in_findings;
    if (!rng.bernoulli(prior_rate)) {
        out.kind = LineKind::none;
        out.rendered = rng.pick(t.free_forms);
        out.clean = out.rendered;
        return out;
    }
    const double u = rng.uniform();
    if (u < 0.2 && !t.all_forms.empty()) {
        out.kind = LineKind::all;
        out.rendered = rng.pick(t.all_forms);
        return out;
    }
    out.kind = LineKind::partial;
    if (u < 0.45) {
        if (!t.subject.empty()) {
            out.clean = t.free_forms.front();
            out.rendered = t.subject + " " + rng.pick(t.plural ? kPluralVerbs : kSingularVerbs);
            return out;
        }
        std::vector<std::string> copular;
        for (const auto& f : t.free_forms) {
            if (f.find(" is ") != std::string::npos || f.find(" are ") != std::string::npos) {
                copular.push_back(f);
            }
        }
        if (!copular.empty()) {
            out.clean = rng.pick(copular);
            const auto is_pos = out.clean.find(" is ");
            const auto are_pos = out.clean.find(" are ");
            out.rendered = out.clean;
            if (is_pos != std::string::npos && (are_pos == std::string::npos || is_pos < are_pos)) {
                out.rendered.replace(is_pos, 4, " remains ");
            } else {
                out.rendered.replace(are_pos, 5, " remain ");
            }
            return out;
        }
    }
    out.clean = rng.pick(t.free_forms);
    out.rendered = rng.pick(kPrefixes) + " " + lower_first(out.clean);
    return out;
}

enum class Condition { normal, pneumonia, chf, effusion, pneumothorax, atelectasis };

Condition pick_condition(Rng& rng) {
    const double u = rng.uniform();
    if (u < 0.35) return Condition::normal;
    if (u < 0.50) return Condition::pneumonia;
    if (u < 0.65) return Condition::chf;
    if (u < 0.77) return Condition::effusion;
    if (u < 0.85) return Condition::pneumothorax;
    return Condition::atelectasis;
}

const std::vector<std::string>& indications_for(Condition c) {
    static const std::vector<std::string> normal{"Chest pain.", "Cough.", "Preoperative evaluation."};
    static const std::vector<std::string> pneumonia{"Cough and fever, evaluate for pneumonia.",
                                                    "Fever, rule out pneumonia."};
    static const std::vector<std::string> chf{"Shortness of breath, history of heart failure.",
                                              "Dyspnea and leg swelling."};
    static const std::vector<std::string> effusion{"Evaluate for pleural effusion.",
                                                   "Diminished breath sounds."};
    static const std::vector<std::string> ptx{"Chest pain, evaluate for pneumothorax.",
                                              "Status post fall with chest pain."};
    static const std::vector<std::string> atel{"Postoperative, evaluate for atelectasis.",
                                               "Hypoxia after surgery."};
    switch (c) {
        case Condition::normal: return normal;
        case Condition::pneumonia: return pneumonia;
        case Condition::chf: return chf;
        case Condition::effusion: return effusion;
        case Condition::pneumothorax: return ptx;
        case Condition::atelectasis: return atel;
    }
    return normal;
}

const std::vector<std::string> kGenericAll{"No significant change from the prior exam",
                                           "No change from prior image"};

struct CaseDraw {
    Condition condition;
    std::string side;        // "left" / "right"
    std::string severity;    // "mild" / "moderate"
    std::string size;        // "small" / "moderate"
    int device = -1;         // -1 none, else device type
    int ett_cm = 4;
};

LineTemplate device_line(const CaseDraw& c) {
    const std::vector<std::string> all{"Support devices are unchanged", "Lines and tubes are unchanged"};
    const std::string cm = std::to_string(c.ett_cm);
    switch (c.device) {
        case 0:
            return plain({"Endotracheal tube terminates " + cm + " cm above the carina",
                          "Endotracheal tube tip is " + cm + " cm above the carina"},
                         all);
        case 1:
            return plain({"Right internal jugular catheter terminates in the mid svc",
                          "Right internal jugular catheter tip is in the mid svc"},
                         all);
        default:
            return plain({"Left chest wall pacemaker leads terminate in the right ventricle",
                          "Left chest wall pacemaker is in place"},
                         all);
    }
}

LineTemplate device_impression(const CaseDraw& c) {
    const std::vector<std::string> all{"Support devices are unchanged"};
    switch (c.device) {
        case 0: return plain({"Endotracheal tube in standard position", "Support devices in standard position"}, all);
        case 1: return plain({"Right internal jugular catheter in standard position", "Support devices in standard position"}, all);
        default: return plain({"Pacemaker leads in standard position", "Support devices in standard position"}, all);
    }
}

LineTemplate lungs_line(const CaseDraw& c) {
    const std::vector<std::string> all{"Lung volumes are stable", "The lungs are unchanged"};
    const std::string Side = text::capitalize_first(c.side);
    const std::string Sev = text::capitalize_first(c.severity);
    switch (c.condition) {
        case Condition::pneumonia:
            return with_subject(Side + " base consolidation",
                                {"There is " + c.side + " base consolidation",
                                 "Focal consolidation is present at the " + c.side + " base"},
                                all);
        case Condition::chf:
            return with_subject(Sev + " pulmonary edema",
                                {"There is " + c.severity + " pulmonary edema",
                                 "Findings are consistent with " + c.severity + " pulmonary edema"},
                                all);
        case Condition::atelectasis:
            return with_subject(Side + " basilar atelectasis",
                                {"There is " + c.side + " basilar atelectasis"}, all);
        default:
            return plain({"The lungs are clear", "Lungs are clear", "No focal consolidation is seen"}, all);
    }
}

LineTemplate pleura_line(const CaseDraw& c, Rng& rng) {
    const std::vector<std::string> all{"The pleural spaces are unchanged"};
    if (c.condition == Condition::effusion) {
        const std::string Size = text::capitalize_first(c.size);
        return with_subject(Size + " " + c.side + " pleural effusion",
                            {"There is a " + c.size + " " + c.side + " pleural effusion"}, all);
    }
    if (c.condition == Condition::chf && rng.bernoulli(0.5)) {
        return with_subject("Small bilateral pleural effusions",
                            {"There are small bilateral pleural effusions"}, all, true);
    }
    return plain({"There is no pleural effusion", "No pleural effusion is seen"}, all);
}

LineTemplate pneumothorax_line(const CaseDraw& c) {
    if (c.condition == Condition::pneumothorax) {
        return with_subject("Small " + c.side + " apical pneumothorax",
                            {"There is a small " + c.side + " apical pneumothorax"}, {});
    }
    return plain({"There is no pneumothorax", "No pneumothorax is seen"}, {});
}

LineTemplate heart_line(const CaseDraw& c) {
    const std::vector<std::string> all{"Heart size is stable", "Cardiac size is unchanged"};
    if (c.condition == Condition::chf) {
        const std::string adverb = c.severity == "mild" ? "mildly" : "moderately";
        return with_subject(text::capitalize_first(c.severity) + " cardiomegaly",
                            {"The heart is " + adverb + " enlarged"}, all);
    }
    return plain({"Heart size is normal", "The cardiac silhouette is normal in size",
                  "Heart size is within normal limits"},
                 all);
}

LineTemplate mediastinum_line(Rng& rng) {
    const std::vector<std::string> all{"The cardiomediastinal silhouette is stable",
                                       "Mediastinal contours are unchanged"};
    if (rng.bernoulli(0.2)) {
        return with_subject("Tortuosity of the thoracic aorta", {"The thoracic aorta is tortuous"}, all);
    }
    return plain({"Mediastinal and hilar contours are normal",
                  "The mediastinal contours are within normal limits"},
                 all);
}

LineTemplate bones_line(Rng& rng) {
    const std::vector<std::string> all{"Osseous structures are unchanged"};
    if (rng.bernoulli(0.3)) {
        return with_subject("Degenerative disease of the thoracic spine",
                            {"There is degenerative disease of the thoracic spine"}, all);
    }
    return plain({"No acute osseous abnormality is seen", "Osseous structures are intact"}, all);
}

LineTemplate impression_line(const CaseDraw& c) {
    const std::string Side = text::capitalize_first(c.side);
    const std::string Sev = text::capitalize_first(c.severity);
    switch (c.condition) {
        case Condition::pneumonia:
            return with_subject(Side + " base pneumonia",
                                {"Findings concerning for " + c.side + " base pneumonia",
                                 Side + " base consolidation concerning for pneumonia"},
                                kGenericAll);
        case Condition::chf:
            return with_subject(Sev + " pulmonary edema",
                                {"Findings consistent with " + c.severity + " pulmonary edema",
                                 Sev + " congestive heart failure"},
                                kGenericAll);
        case Condition::effusion:
            return with_subject(text::capitalize_first(c.size) + " " + c.side + " pleural effusion",
                                {text::capitalize_first(c.size) + " " + c.side +
                                 " pleural effusion without pneumothorax"},
                                kGenericAll);
        case Condition::pneumothorax:
            return with_subject("Small " + c.side + " apical pneumothorax",
                                {"Small " + c.side + " apical pneumothorax without tension"},
                                kGenericAll);
        case Condition::atelectasis:
            return with_subject(Side + " basilar atelectasis",
                                {Side + " basilar atelectasis without pneumonia"}, kGenericAll);
        case Condition::normal:
            break;
    }
    return plain({"No acute cardiopulmonary process", "No acute cardiopulmonary abnormality",
                  "No acute intrathoracic process"},
                 kGenericAll);
}

enum class Slot { device, lungs, pleura, pneumothorax, heart, mediastinum, bones, impression, device_impression };

SyntheticReport generate_one(Rng& rng, const SynthConfig& cfg, std::size_t index) {
    CaseDraw c;
    c.condition = pick_condition(rng);
    c.side = rng.bernoulli(0.5) ? "left" : "right";
    c.severity = rng.bernoulli(0.5) ? "mild" : "moderate";
    c.size = rng.bernoulli(0.5) ? "small" : "moderate";
    if (rng.bernoulli(0.15)) {
        c.device = static_cast<int>(rng.below(3));
        c.ett_cm = 3 + static_cast<int>(rng.below(3));
    }

    std::vector<Slot> slots{Slot::lungs, Slot::pleura, Slot::heart, Slot::impression};
    if (c.condition == Condition::pneumothorax) {
        slots.push_back(Slot::pneumothorax);
    }
    if (c.device >= 0) {
        slots.push_back(Slot::device);
    }
    std::vector<Slot> optional{Slot::mediastinum, Slot::bones};
    if (c.condition != Condition::pneumothorax) {
        optional.push_back(Slot::pneumothorax);
    }
    if (c.device >= 0) {
        optional.push_back(Slot::device_impression);
    }
    rng.shuffle(optional);
    const std::size_t target = cfg.min_lines + rng.below(cfg.max_lines - cfg.min_lines + 1);
    for (Slot s : optional) {
        if (slots.size() >= target) {
            break;
        }
        slots.push_back(s);
    }
    std::sort(slots.begin(), slots.end());

    SyntheticReport out;
    for (Slot s : slots) {
        LineTemplate t;
        bool in_findings = true;
        switch (s) {
            case Slot::device: t = device_line(c); break;
            case Slot::lungs: t = lungs_line(c); break;
            case Slot::pleura: t = pleura_line(c, rng); break;
            case Slot::pneumothorax: t = pneumothorax_line(c); break;
            case Slot::heart: t = heart_line(c); break;
            case Slot::mediastinum: t = mediastinum_line(rng); break;
            case Slot::bones: t = bones_line(rng); break;
            case Slot::impression: t = impression_line(c); in_findings = false; break;
            case Slot::device_impression: t = device_impression(c); in_findings = false; break;
        }
        out.lines.push_back(render_line(rng, t, cfg.prior_line_rate, in_findings));
    }

    std::vector<std::string> findings;
    std::vector<std::string> impression;
    for (const auto& l : out.lines) {
        (l.in_findings ? findings : impression).push_back(l.rendered);
    }
    auto& r = out.report;
    char id[32];
    std::snprintf(id, sizeof id, "syn%llu-%06zu", static_cast<unsigned long long>(cfg.seed), index);
    r.study_id = id;
    const bool matching = rng.bernoulli(0.8);
    r.indication = rng.pick(indications_for(matching ? c.condition : pick_condition(rng)));
    r.comparison = rng.bernoulli(0.5) ? "None." : "Chest radiograph ___.";
    r.findings = join_lines(findings);
    r.impression = join_lines(impression);
    return out;
}

}  // namespace

std::vector<SyntheticReport> generate_synthetic_with_truth(const SynthConfig& config) {
    config.validate();
    Rng rng(config.seed);
    std::vector<SyntheticReport> out;
    out.reserve(config.report_count);
    for (std::size_t i = 0; i < config.report_count; ++i) {
        out.push_back(generate_one(rng, config, i));
    }
    return out;
}

std::vector<RadiologyReport> generate_synthetic_corpus(const SynthConfig& config) {
    std::vector<RadiologyReport> out;
    for (auto& s : generate_synthetic_with_truth(config)) {
        out.push_back(std::move(s.report));
    }
    return out;
}

}  // namespace reportdpo::corpus
