"""Compiled inner loop for :func:`tetherclimb.dynamics.step`.

The parameter vector is built by ``dynamics._packed``.
"""

import math

import numpy as np
from numba import njit

# indices into the packed parameter vector
FGX, FGY, FGZ, MU_V, K_C, C_C, N_EXP, M_R, RHO, F_LOAD, SIG_K, T_MAX, BUDGET, \
    MASS, I_Z, K_R, C_R, K_T, C_T, L_0 = range(20)
N_PARAMS = 20


@njit(cache=True)
def _hertz(delta, rate, k_c, c_c, n_exp):
    if delta <= 0.0:
        return 0.0
    f = k_c * delta ** n_exp + c_c * rate
    return f if f > 0.0 else 0.0


@njit(cache=True)
def step_kernel(r, v, R, V, phi, phi_dot, want, thrust, fuel_used, attach, prm, dt):
    n = r.shape[0]
    r_new = np.empty_like(r)
    v_new = np.empty_like(v)
    held = np.zeros(n, dtype=np.bool_)
    over = np.zeros(n, dtype=np.bool_)
    cut = np.zeros(n, dtype=np.bool_)
    fuel_new = fuel_used.copy()
    applied = thrust.copy()
    bad = -1

    for i in range(n):
        mag = math.sqrt(thrust[i, 0] ** 2 + thrust[i, 1] ** 2 + thrust[i, 2] ** 2)
        if mag > prm[T_MAX] * (1.0 + 1e-9):
            bad = i
        spend = mag * dt
        if spend > 0.0 and fuel_used[i] + spend > prm[BUDGET] * (1.0 + 1e-12):
            cut[i] = True
            applied[i, 0] = 0.0
            applied[i, 1] = 0.0
            applied[i, 2] = 0.0
        else:
            fuel_new[i] = fuel_used[i] + spend

    c = math.cos(phi)
    s = math.sin(phi)
    k_t = prm[K_T]
    c_t = prm[C_T]
    l_0 = prm[L_0]
    m_r = prm[M_R]
    f_load = prm[F_LOAD]
    fp0 = 0.0
    fp1 = 0.0
    fp2 = 0.0
    torque = 0.0
    for i in range(n):
        qx = c * attach[i, 0] - s * attach[i, 1]
        qy = s * attach[i, 0] + c * attach[i, 1]
        lx = R[0] + qx - r[i, 0]
        ly = R[1] + qy - r[i, 1]
        lz = R[2] - r[i, 2]
        length = math.sqrt(lx * lx + ly * ly + lz * lz)
        ftx = 0.0
        fty = 0.0
        ftz = 0.0
        if length > l_0:
            ldx = V[0] - phi_dot * qy - v[i, 0]
            ldy = V[1] + phi_dot * qx - v[i, 1]
            ldz = V[2] - v[i, 2]
            rate = (lx * ldx + ly * ldy + lz * ldz) / length
            tension = k_t * (length - l_0) + c_t * rate
            if tension > 0.0:
                ftx = tension * lx / length
                fty = tension * ly / length
                ftz = tension * lz / length
        fp0 -= ftx
        fp1 -= fty
        fp2 -= ftz
        torque += qx * (-fty) - qy * (-ftx)

        fc = _hertz(prm[RHO] - r[i, 2], -v[i, 2], prm[K_C], prm[C_C], prm[N_EXP])
        lx_ = ftx + m_r * prm[FGX] + applied[i, 0]
        ly_ = fty + m_r * prm[FGY] + applied[i, 1]
        lz_ = ftz + m_r * prm[FGZ] + applied[i, 2] + fc
        demand = math.sqrt(lx_ * lx_ + ly_ * ly_ + lz_ * lz_)
        if want[i] and demand <= f_load:
            held[i] = True
            for a in range(3):
                v_new[i, a] = 0.0
                r_new[i, a] = r[i, a]
            continue
        if want[i]:
            over[i] = True
            grip = f_load / (1.0 + math.exp(-prm[SIG_K] * (demand - 0.5 * f_load)))
            scale = 1.0 - grip / demand
            lx_ *= scale
            ly_ *= scale
            lz_ *= scale
        v_new[i, 0] = v[i, 0] + lx_ * dt / m_r
        v_new[i, 1] = v[i, 1] + ly_ * dt / m_r
        v_new[i, 2] = v[i, 2] + lz_ * dt / m_r
        for a in range(3):
            r_new[i, a] = r[i, a] + v_new[i, a] * dt

    mass = prm[MASS]
    fcp = _hertz(-R[2], -V[2], prm[K_C], prm[C_C], prm[N_EXP])
    fp0 += mass * prm[FGX] - prm[MU_V] * V[0]
    fp1 += mass * prm[FGY] - prm[MU_V] * V[1]
    fp2 += mass * prm[FGZ] - prm[MU_V] * V[2] + fcp
    V_new = np.empty(3)
    R_new = np.empty(3)
    V_new[0] = V[0] + fp0 * dt / mass
    V_new[1] = V[1] + fp1 * dt / mass
    V_new[2] = V[2] + fp2 * dt / mass
    for a in range(3):
        R_new[a] = R[a] + V_new[a] * dt
    torque -= prm[K_R] * phi + prm[C_R] * phi_dot
    phi_dot_new = phi_dot + torque * dt / prm[I_Z]
    phi_new = phi + phi_dot_new * dt
    return r_new, v_new, R_new, V_new, phi_new, phi_dot_new, held, over, cut, fuel_new, applied, bad
