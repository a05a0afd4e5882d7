#include <math.h>
#include <stdio.h>

#include "empower.h"

int main(void) {
    EmpSystem *sys = NULL;
    if (emp_system_pendulum(1.0, 1.0, 9.81, &sys) != EMP_STATUS_OK) return 1;

    double x[2] = {0.0, 0.0};
    EmpHorizon h = {EMP_VARIANT_CLASSIC, 0.01, 50, 0, 0};
    EmpChannel c = emp_channel_default();
    double value = 0.0;
    if (emp_empowerment(sys, x, 2, &h, &c, &value) != EMP_STATUS_OK) return 2;
    if (!(value > 0.0)) return 3;

    EmpStatus st = emp_empowerment(sys, x, 3, &h, &c, &value);
    if (st != EMP_STATUS_DIMENSION_MISMATCH) return 4;
    char msg[256];
    emp_last_error_message(msg, sizeof msg);

    EmpPolicy p = emp_policy_default(EMP_VARIANT_CLASSIC, 0.01, 20);
    p.decision_dt = 0.1;
    double x0[2] = {3.141592653589793, 0.0};
    EmpRollout *ro = NULL;
    if (emp_rollout_run(sys, x0, 2, 1.0, &p, 0.0, 1, &ro) != EMP_STATUS_OK) return 5;
    size_t n = emp_rollout_len(ro);
    if (n != 10) return 6;

    emp_rollout_free(ro);
    emp_system_free(sys);
    printf("%s %.6f\n", msg, value);
    return 0;
}
