#include <stdio.h>
#include "finality_lab.h"

int main(void) {
    FlScenario *scenario = NULL;
    if (fl_scenario_parse("n = 9\nvariant = tob3sf\nslots = 10\n", &scenario) != FL_STATUS_OK) {
        fprintf(stderr, "%s\n", fl_last_error());
        return 2;
    }
    FlTrace *trace = NULL;
    if (fl_run(scenario, &trace) != FL_STATUS_OK) {
        fprintf(stderr, "%s\n", fl_last_error());
        fl_scenario_free(scenario);
        return 2;
    }
    char *verdicts = fl_verdict_text(trace);
    fputs(verdicts, stdout);
    int passed = fl_trace_passed(trace);
    fl_string_free(verdicts);
    fl_trace_free(trace);
    fl_scenario_free(scenario);
    return passed ? 0 : 1;
}
