// Instruction prefix and per-keyword few-shot examples for the annotation
// prompt.

#include <map>

#include "reportdpo/annotate.hpp"

namespace reportdpo::annotate {

const std::string& instruction_prefix() {
    static const std::string prefix = R"(Instructions: Return only a json object for this radiology report, with
a key-value pair for every line.
Each line starts with a numerical id. The key will be the id. The value
will be another JSON object.
Inside the value object, set the "prior_cat" attribute to say whether
this line makes a comparison to a prior exam.
"prior_cat" must take one of three possible values: "none",
"partial", "all".
1.) If the sentence has some clear information about the current exam,
set "prior_cat" as "partial" and then add a "partial_rewrite"
attribute to the value JSON object. For the value of "partial_rewrite",
rewrite the sentence to keep only that information, without any
comparison to a prior report.
2.) If there is no comparison, set "prior_cat" as "none". Do not
rewrite the sentence.
3.) In the rare case that the sentence has absolutely no clear
information about the current exam (e.g. does not mention that any
abnormality is present or absent), set "prior_cat" as "all". Do not
rewrite the sentence.
Here is an example:
Report: [0] No acute pulmonary process. [1] No significant changes from
last exam.
JSON: {"0":{"prior_cat":"none"}, "1":{"prior_cat":"all"}}
Examples of individual lines and their value objects:
Heart is enlarged. -> {"prior_cat":"none"}
Heart size is stable. -> {"prior_cat":"all"}
In comparison with the study on ___, heart has enlarged, while lungs
remain clear. -> {"prior_cat": "partial", "partial_rewrite":
"Heart is enlarged, while lungs are clear".})";
    return prefix;
}

namespace {

struct Shot {
    const char* line;
    const char* value;
};

std::string block(std::string_view keyword, std::initializer_list<Shot> shots) {
    std::string out = "\"" + std::string(keyword) + "\": ";
    bool first = true;
    for (const auto& s : shots) {
        if (!first) {
            out += '\n';
        }
        first = false;
        out += s.line;
        out += " -> ";
        out += s.value;
    }
    return out;
}

constexpr const char* kAll = R"({"prior_cat":"all"})";
constexpr const char* kNone = R"({"prior_cat":"none"})";

const std::map<std::string, std::string, std::less<>>& table() {
    static const std::map<std::string, std::string, std::less<>> t = [] {
        std::map<std::string, std::string, std::less<>> m;
        m["more"] = block("more", {
            {"The right effusion is more prominent.", R"({"prior_cat":"partial", "partial_rewrite": "The right effusion is prominent."})"},
            {"There is more than 2 cm of tube above the carina.", kNone}});
        m["regress"] = block("regress", {
            {"Right upper lobe opacity has regressed.", R"({"prior_cat":"partial", "partial_rewrite": "There is right upper lobe opacity."})"}});
        m["advanc"] = block("advanc", {
            {"The feeding tube has been advanced and now terminates in the stomach.", R"({"prior_cat":"partial", "partial_rewrite": "The feeding tube terminates in the stomach."})"},
            {"Advanced degenerative disease of the spine.", kNone}});
        m["less"] = block("less", {
            {"Left basilar opacity is less conspicuous.", R"({"prior_cat":"partial", "partial_rewrite": "There is left basilar opacity."})"},
            {"Nodular opacity is less than 1 cm.", kNone}});
        m["fewer"] = block("fewer", {
            {"There are fewer areas of consolidation.", R"({"prior_cat":"partial", "partial_rewrite": "There are areas of consolidation."})"}});
        m["constant"] = block("constant", {
            {"Mediastinal widening is constant.", kAll}});
        m["unchanged"] = block("unchanged", {
            {"Cardiac size is unchanged.", kAll},
            {"Unchanged small left pleural effusion.", R"({"prior_cat":"partial", "partial_rewrite": "Small left pleural effusion."})"}});
        m["prior"] = block("prior", {
            {"As seen on prior CT, the lungs are hyperinflated.", R"({"prior_cat":"partial", "partial_rewrite": "The lungs are hyperinflated."})"},
            {"No change from prior image.", kAll}});
        m["new"] = block("new", {
            {"There is a new right pleural effusion.", R"({"prior_cat":"partial", "partial_rewrite": "There is a right pleural effusion."})"},
            {"No new consolidation.", R"({"prior_cat":"partial", "partial_rewrite": "No consolidation."})"}});
        m["stable"] = block("stable", {
            {"Heart size and mediastinum are stable", kAll},
            {"The cardiomediastinal silhouettes are stable reflective of a tortuous\nthoracic aorta.",
             "{\"prior_cat\":\"partial\",  \"partial_rewrite\":\n\"The cardiomediastinal silhouettes are reflective of a tortuous\nthoracic aorta.\"}"}});
        m["progressed"] = block("progressed", {
            {"Pulmonary edema has progressed.", R"({"prior_cat":"partial", "partial_rewrite": "Pulmonary edema is present."})"}});
        m["interval"] = block("interval", {
            {"Interval placement of a right chest tube.", R"({"prior_cat":"partial", "partial_rewrite": "A right chest tube is in place."})"},
            {"No interval change.", kAll}});
        m["previous"] = block("previous", {
            {"The previously seen nodule is not visualized.", R"({"prior_cat":"partial", "partial_rewrite": "No nodule is visualized."})"}});
        m["further"] = block("further", {
            {"The tube should be withdrawn further.", R"({"prior_cat":"none"})"},
            {"Further increase in the left effusion.", R"({"prior_cat":"partial", "partial_rewrite": "There is a left effusion."})"}});
        m["again"] = block("again", {
            {"A small left effusion is again seen.", R"({"prior_cat":"partial", "partial_rewrite": "A small left effusion is seen."})"}});
        m["since"] = block("since", {
            {"No significant change since the prior study.", kAll}});
        m["increase"] = block("increase", {
            {"Increased right basilar opacity.", R"({"prior_cat":"partial", "partial_rewrite": "Right basilar opacity."})"},
            {"Increased interstitial markings suggest edema.", kNone}});
        m["improve"] = block("improve", {
            {"Pulmonary edema has improved.", R"({"prior_cat":"partial", "partial_rewrite": "Pulmonary edema is present."})"}});
        m["remain"] = block("remain", {
            {"The lungs remain clear.", R"({"prior_cat":"partial", "partial_rewrite": "The lungs are clear."})"}});
        m["worse"] = block("worse", {
            {"Consolidation has worsened.", R"({"prior_cat":"partial", "partial_rewrite": "Consolidation is present."})"}});
        m["persist"] = block("persist", {
            {"Right lower lobe atelectasis persists.", R"({"prior_cat":"partial", "partial_rewrite": "Right lower lobe atelectasis is present."})"}});
        m["remov"] = block("remov", {
            {"The endotracheal tube has been removed.", R"({"prior_cat":"partial", "partial_rewrite": "No endotracheal tube is present."})"}});
        m["similar"] = block("similar", {
            {"Findings are similar to the prior exam.", kAll},
            {"Similar appearance of moderate cardiomegaly.", R"({"prior_cat":"partial", "partial_rewrite": "Moderate cardiomegaly."})"}});
        m["cleared"] = block("cleared", {
            {"The left base opacity has cleared.", R"({"prior_cat":"partial", "partial_rewrite": "No left base opacity is present."})"}});
        m["earlier"] = block("earlier", {
            {"Compared to the earlier radiograph, there is mild pulmonary edema.", R"({"prior_cat":"partial", "partial_rewrite": "There is mild pulmonary edema."})"}});
        m["existing"] = block("existing", {
            {"Pre-existing right pleural effusion.", R"({"prior_cat":"partial", "partial_rewrite": "Right pleural effusion."})"}});
        m["decrease"] = block("decrease", {
            {"Decreased size of the left effusion.", R"({"prior_cat":"partial", "partial_rewrite": "There is a left effusion."})"},
            {"Decreased lung volumes.", kNone}});
        m["reduc"] = block("reduc", {
            {"Reduced right pneumothorax.", R"({"prior_cat":"partial", "partial_rewrite": "Right pneumothorax."})"}});
        m["recurren"] = block("recurren", {
            {"Recurrent left pleural effusion.", R"({"prior_cat":"partial", "partial_rewrite": "Left pleural effusion."})"}});
        m["redemonstrat"] = block("redemonstrat", {
            {"Redemonstration of a calcified granuloma.", R"({"prior_cat":"partial", "partial_rewrite": "There is a calcified granuloma."})"}});
        m["resol"] = block("resol", {
            {"The right pneumothorax has resolved.", R"({"prior_cat":"partial", "partial_rewrite": "No right pneumothorax is present."})"}});
        m["still"] = block("still", {
            {"There is still a small left apical pneumothorax.", R"({"prior_cat":"partial", "partial_rewrite": "There is a small left apical pneumothorax."})"}});
        m["has enlarged"] = block("has enlarged", {
            {"The heart has enlarged.", R"({"prior_cat":"partial", "partial_rewrite": "The heart is enlarged."})"}});
        m["lower"] = block("lower", {
            {"Right lower lobe consolidation.", kNone},
            {"Lung volumes are lower.", R"({"prior_cat":"partial", "partial_rewrite": "Lung volumes are low."})"}});
        m["larger"] = block("larger", {
            {"The left effusion is larger.", R"({"prior_cat":"partial", "partial_rewrite": "There is a left effusion."})"}});
        m["extubated"] = block("extubated", {
            {"The patient has been extubated.", R"({"prior_cat":"partial", "partial_rewrite": "No endotracheal tube is present."})"}});
        m["smaller"] = block("smaller", {
            {"The pneumothorax is smaller.", R"({"prior_cat":"partial", "partial_rewrite": "There is a pneumothorax."})"}});
        m["higher"] = block("higher", {
            {"The endotracheal tube is higher, 6 cm above the carina.", R"({"prior_cat":"partial", "partial_rewrite": "The endotracheal tube is 6 cm above the carina."})"}});
        m["continue"] = block("continue", {
            {"There continues to be mild pulmonary edema.", R"({"prior_cat":"partial", "partial_rewrite": "There is mild pulmonary edema."})"}});
        m["compar"] = block("compar", {
            {"Compared to the prior study, there is a small right effusion.", R"({"prior_cat":"partial", "partial_rewrite": "There is a small right effusion."})"},
            {"Comparison is made to the study from ___.", kAll}});
        m["change"] = block("change", {
            {"No significant change.", kAll},
            {"Postsurgical changes of the right hemithorax.", kNone}});
        m["develop"] = block("develop", {
            {"A left pleural effusion has developed.", R"({"prior_cat":"partial", "partial_rewrite": "A left pleural effusion is present."})"}});
        m["before"] = block("before", {
            {"Heart size is the same as before.", kAll}});
        return m;
    }();
    return t;
}

}  // namespace

const std::string* keyword_examples(std::string_view keyword) {
    const auto& t = table();
    auto it = t.find(keyword);
    return it == t.end() ? nullptr : &it->second;
}

}  // namespace reportdpo::annotate
