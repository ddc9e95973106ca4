"""Compiled inner loops for the walk engine.

Randomness comes from numba's Mersenne Twister, seeded once per trajectory;
it produces the same doubles as ``numpy.random.RandomState(seed)``, which is
what the pure-Python reference engine uses.

Dyadic points are stored as a stack of binary digits: ``stack[L-1]`` is the
first digit after the binary point and ``stack[0]`` the last (always 1).
The generators of F only rewrite the first three digits.
"""

import numpy as np
from numba import njit

# letter codes: 2*i + inverted, alphabet ("A", "B")
A, A_INV, B, B_INV = 0, 1, 2, 3

# comb op codes, shared by both comb actions
VERT, VERT_INV, XP, XM, YP, YM = 0, 1, 2, 3, 4, 5

COMB_BIAS = 1 << 20
MAX_TAIL_RADIUS = 2.0**52


# --- shared helpers -----------------------------------------------------------


@njit(cache=True, nogil=True)
def _find_in(arr, lo, hi, key):
    """Index of ``key`` in sorted ``arr[lo:hi]`` or -1."""
    end = hi
    while lo < hi:
        mid = (lo + hi) >> 1
        if arr[mid] < key:
            lo = mid + 1
        else:
            hi = mid
    if lo < end and arr[lo] == key:
        return lo
    return -1


@njit(cache=True, nogil=True)
def _bisect_right(cdf, u):
    lo = 0
    hi = len(cdf)
    while lo < hi:
        mid = (lo + hi) >> 1
        if u < cdf[mid]:
            hi = mid
        else:
            lo = mid + 1
    if lo > len(cdf) - 1:
        lo = len(cdf) - 1
    return lo


@njit(cache=True, nogil=True)
def _touch(i, t, st, touch_times):
    # st columns: 0 in_cut, 1 label, 2 first_exit, 3 last_touch, 4 touches, 5 changes
    if st[i, 3] != t:
        n = st[i, 4]
        if n < touch_times.shape[1]:
            touch_times[i, n] = t
        st[i, 4] = n + 1
        st[i, 3] = t
    st[i, 0] = 1


@njit(cache=True, nogil=True)
def _outside(i, t, label, st):
    if label != st[i, 1]:
        if st[i, 1] >= 0:
            st[i, 5] += 1
        st[i, 1] = label
    if st[i, 2] < 0:
        st[i, 2] = t
    st[i, 0] = 0


NO_EXIT = -3


@njit(cache=True, nogil=True)
def _track_key(t, key, cut_keys, cut_ptr, bnd_keys, bnd_labels, bnd_ptr, st, pend, touch_times):
    """Letter-level tracking of one path vertex with membership key ``key``
    (-1 when the vertex is too far out to belong to any cut). Exits are
    held in ``pend`` until the step is committed."""
    for i in range(st.shape[0]):
        if key >= 0 and _find_in(cut_keys, cut_ptr[i], cut_ptr[i + 1], key) >= 0:
            _touch(i, t, st, touch_times)
        elif st[i, 0] == 1:
            j = _find_in(bnd_keys, bnd_ptr[i], bnd_ptr[i + 1], key) if key >= 0 else -1
            pend[i] = bnd_labels[j] if j >= 0 else -2
            st[i, 0] = 0


@njit(cache=True, nogil=True)
def _commit(t, st, pend):
    """End of step ``t``: a walk ending outside the cut takes the component
    of its last exit during the step (if any)."""
    for i in range(st.shape[0]):
        if st[i, 0] == 0 and pend[i] != NO_EXIT:
            _outside(i, t, pend[i], st)
        pend[i] = NO_EXIT


def new_state(n_levels, init_labels, start_in_cut, touch_cap):
    st = np.zeros((n_levels, 6), dtype=np.int64)
    st[:, 1] = init_labels
    st[:, 2] = -1
    st[:, 3] = -1
    for i in range(n_levels):
        if start_in_cut[i]:
            st[i, 0] = 1
            st[i, 3] = 0
            st[i, 4] = 1
        else:
            st[i, 2] = 0
    tt = np.full((n_levels, touch_cap), -1, dtype=np.int64)
    for i in range(n_levels):
        if start_in_cut[i] and touch_cap > 0:
            tt[i, 0] = 0
    return st, tt


# --- dyadic bit stacks ----------------------------------------------------------


@njit(cache=True, nogil=True)
def _prefix64(stack, L):
    n = 0
    for j in range(1, 7):
        n <<= 1
        if j <= L:
            n |= stack[L - j]
    return n


@njit(cache=True, nogil=True)
def _write64(stack, n):
    tz = 0
    m = n
    while (m & 1) == 0:
        m >>= 1
        tz += 1
    L = 6 - tz
    for j in range(1, L + 1):
        stack[L - j] = (n >> (6 - j)) & 1
    return L


@njit(cache=True, nogil=True)
def _slow_apply(stack, L, code):
    n = _prefix64(stack, L)
    if code == A:
        if n <= 32:
            n = n // 2
        elif n <= 48:
            n = n - 16
        else:
            n = 2 * n - 64
    elif code == A_INV:
        if n <= 16:
            n = 2 * n
        elif n <= 32:
            n = n + 16
        else:
            n = (n + 64) // 2
    elif code == B:
        if n <= 32:
            pass
        elif n <= 48:
            n = n // 2 + 16
        elif n <= 56:
            n = n - 8
        else:
            n = 2 * n - 64
    else:
        if n <= 32:
            pass
        elif n <= 40:
            n = 2 * n - 32
        elif n <= 48:
            n = n + 8
        else:
            n = (n + 64) // 2
    return _write64(stack, n)


@njit(cache=True, nogil=True)
def dyadic_apply(stack, L, code):
    """Apply one generator to the digit stack; returns the new length."""
    if L <= 4:
        return _slow_apply(stack, L, code)
    s1 = stack[L - 1]
    s2 = stack[L - 2]
    if code == A:
        if s1 == 0:
            stack[L] = 0
            return L + 1
        if s2 == 0:
            stack[L - 1] = 0
            stack[L - 2] = 1
            return L
        return L - 1
    if code == A_INV:
        if s1 == 1:
            stack[L] = 1
            return L + 1
        if s2 == 0:
            return L - 1
        stack[L - 1] = 1
        stack[L - 2] = 0
        return L
    if s1 == 0:
        return L
    s3 = stack[L - 3]
    if code == B:
        if s2 == 0:
            stack[L - 1] = 0
            stack[L] = 1
            return L + 1
        if s3 == 0:
            stack[L - 2] = 0
            stack[L - 3] = 1
            return L
        return L - 1
    # B_INV
    if s2 == 1:
        stack[L] = 1
        return L + 1
    if s3 == 0:
        stack[L - 2] = 1
        return L - 1
    stack[L - 2] = 1
    stack[L - 3] = 0
    return L


@njit(cache=True, nogil=True)
def dyadic_key(stack, L, maxlen):
    """``2**L + numerator`` for short expansions, -1 otherwise."""
    if L > maxlen:
        return -1
    key = 1
    for j in range(L - 1, -1, -1):
        key = (key << 1) | stack[j]
    return key


@njit(cache=True, nogil=True)
def dyadic_parent_code(stack, L):
    """Generator moving one step towards 5/8 in the tree, or -1 at 5/8."""
    n = _prefix64(stack, L)
    exact = L <= 6
    if exact and n == 40:
        return -1
    if exact and n == 48:
        return B
    if n < 32 or (exact and n == 32):
        return A_INV
    if n >= 56:
        return A
    if n < 48:
        return B_INV
    return A


@njit(cache=True, nogil=True)
def dyadic_distance(stack, L, tmp, anc_keys, anc_depth, maxlen):
    """Tree distance to the vertex whose ancestor keys (sorted) are given."""
    for j in range(L):
        tmp[j] = stack[j]
    steps = 0
    while True:
        k = dyadic_key(tmp, L, maxlen)
        if k >= 0:
            i = _find_in(anc_keys, 0, len(anc_keys), k)
            if i >= 0:
                return steps + anc_depth[i]
        code = dyadic_parent_code(tmp, L)
        L = dyadic_apply(tmp, L, code)
        steps += 1


@njit(cache=True, nogil=True)
def walk_dyadic(
    seed,
    steps,
    start_stack,
    cdf,
    atom_ptr,
    atom_codes,
    checkpoints,
    cut_keys,
    cut_ptr,
    bnd_keys,
    bnd_labels,
    bnd_ptr,
    maxlen,
    start_key,
    anc_keys,
    anc_depth,
    st,
    touch_times,
):
    np.random.seed(seed)
    maxw = 0
    for a in range(len(atom_ptr) - 1):
        maxw = max(maxw, atom_ptr[a + 1] - atom_ptr[a])
    L0 = len(start_stack)
    cap = L0 + steps * maxw + 8
    stack = np.zeros(cap, dtype=np.uint8)
    tmp = np.zeros(cap, dtype=np.uint8)
    L = L0
    for j in range(L0):
        stack[j] = start_stack[j]
    nck = len(checkpoints)
    ck_len = np.zeros(nck, dtype=np.int64)
    ck_dist = np.zeros(nck, dtype=np.int64)
    ck_label = np.zeros((nck, st.shape[0]), dtype=np.int64)
    pend = np.full(st.shape[0], NO_EXIT, dtype=np.int64)
    snap = np.zeros(max(64, 4 * L0), dtype=np.uint8)
    snap_used = 0
    visits = 1
    last_visit = 0
    ci = 0
    while ci < nck and checkpoints[ci] == 0:
        ck_len[ci] = L
        ck_dist[ci] = 0
        for i in range(st.shape[0]):
            ck_label[ci, i] = st[i, 1] if st[i, 0] == 0 else -1
        if snap_used + L > len(snap):
            bigger = np.zeros(2 * (snap_used + L), dtype=np.uint8)
            bigger[:snap_used] = snap[:snap_used]
            snap = bigger
        snap[snap_used : snap_used + L] = stack[:L]
        snap_used += L
        ci += 1
    for t in range(1, steps + 1):
        a = _bisect_right(cdf, np.random.random())
        for p in range(atom_ptr[a], atom_ptr[a + 1]):
            L = dyadic_apply(stack, L, atom_codes[p])
            key = dyadic_key(stack, L, maxlen)
            _track_key(t, key, cut_keys, cut_ptr, bnd_keys, bnd_labels, bnd_ptr, st, pend, touch_times)
        _commit(t, st, pend)
        if L <= 62 and dyadic_key(stack, L, 62) == start_key:
            visits += 1
            last_visit = t
        while ci < nck and checkpoints[ci] == t:
            ck_len[ci] = L
            ck_dist[ci] = dyadic_distance(stack, L, tmp, anc_keys, anc_depth, 62)
            for i in range(st.shape[0]):
                ck_label[ci, i] = st[i, 1] if st[i, 0] == 0 else -1
            if snap_used + L > len(snap):
                bigger = np.zeros(2 * (snap_used + L), dtype=np.uint8)
                bigger[:snap_used] = snap[:snap_used]
                snap = bigger
            snap[snap_used : snap_used + L] = stack[:L]
            snap_used += L
            ci += 1
    return snap[:snap_used].copy(), ck_len, ck_dist, ck_label, visits, last_visit


# --- combs ---------------------------------------------------------------------


@njit(cache=True, nogil=True)
def comb_key(l, x, y):
    if abs(l) >= COMB_BIAS or abs(x) >= COMB_BIAS or abs(y) >= COMB_BIAS:
        return -1
    return ((l + COMB_BIAS) << 42) | ((x + COMB_BIAS) << 21) | (y + COMB_BIAS)


@njit(cache=True, nogil=True)
def comb_distance(l0, x0, y0, l, x, y):
    if l == l0:
        return abs(x - x0) + abs(y - y0)
    return abs(x0) + abs(y0) + abs(l - l0) + abs(x) + abs(y)


@njit(cache=True, nogil=True)
def sample_radius(head_cdf, R, alpha, reject_const):
    u = np.random.random()
    if u < head_cdf[len(head_cdf) - 1]:
        return _bisect_right(head_cdf, u) + 1
    s = 1.0 + alpha
    while True:
        yv = (R + 1.0) * (1.0 - np.random.random()) ** (-1.0 / alpha)
        v = np.random.random()
        if yv >= MAX_TAIL_RADIUS:
            continue
        k = np.floor(yv)
        q = -k * np.expm1((1.0 - s) * np.log1p(1.0 / k)) / (s - 1.0)
        if v * reject_const * q <= 1.0:
            return np.int64(k)


@njit(cache=True, nogil=True)
def sphere_point(k, j):
    q = j // k
    i = j - q * k
    if q == 0:
        return k - i, i
    if q == 1:
        return -i, k - i
    if q == 2:
        return -(k - i), -i
    return i, -(k - i)


@njit(cache=True, nogil=True)
def _comb_label(l, x, y, i, bnd_keys, bnd_labels, bnd_ptr):
    key = comb_key(l, x, y)
    j = _find_in(bnd_keys, bnd_ptr[i], bnd_ptr[i + 1], key) if key >= 0 else -1
    return bnd_labels[j] if j >= 0 else -2


@njit(cache=True, nogil=True)
def _plane_jump_track(t, l, x0, y0, dx, dy, cut_xyz, cut_ptr, bnd_keys, bnd_labels, bnd_ptr, st, pend, touch_times):
    """Track the path of a Z^2 jump, all x-moves first, then all y-moves,
    without walking it letter by letter: only cut vertices on the path matter."""
    ax = abs(dx)
    total = ax + abs(dy)
    if total == 0:
        return
    x1 = x0 + dx
    y1 = y0 + dy
    sx = 1 if dx > 0 else -1
    sy = 1 if dy > 0 else -1
    for i in range(st.shape[0]):
        last = -1
        for c in range(cut_ptr[i], cut_ptr[i + 1]):
            if cut_xyz[c, 0] != l:
                continue
            cx = cut_xyz[c, 1]
            cy = cut_xyz[c, 2]
            idx = -1
            if cy == y0 and min(x0, x1) <= cx <= max(x0, x1):
                idx = abs(cx - x0)
            elif cx == x1 and min(y0, y1) <= cy <= max(y0, y1):
                idx = ax + abs(cy - y0)
            if idx > last:
                last = idx
        if last < 1:
            # the path avoids the cut after its first vertex
            if st[i, 0] == 1:
                if ax > 0:
                    pend[i] = _comb_label(l, x0 + sx, y0, i, bnd_keys, bnd_labels, bnd_ptr)
                else:
                    pend[i] = _comb_label(l, x0, y0 + sy, i, bnd_keys, bnd_labels, bnd_ptr)
                st[i, 0] = 0
            continue
        _touch(i, t, st, touch_times)
        if last == total:
            continue
        nxt = last + 1
        if nxt <= ax:
            pend[i] = _comb_label(l, x0 + sx * nxt, y0, i, bnd_keys, bnd_labels, bnd_ptr)
        else:
            pend[i] = _comb_label(l, x1, y0 + sy * (nxt - ax), i, bnd_keys, bnd_labels, bnd_ptr)
        st[i, 0] = 0


@njit(cache=True, nogil=True)
def walk_comb(
    seed,
    steps,
    start,
    cdf,
    atom_ptr,
    atom_codes,
    has_family,
    head_cdf,
    fam_R,
    fam_alpha,
    fam_reject,
    checkpoints,
    cut_keys,
    cut_ptr,
    cut_xyz,
    bnd_keys,
    bnd_labels,
    bnd_ptr,
    st,
    touch_times,
):
    np.random.seed(seed)
    l0 = start[0]
    x0 = start[1]
    y0 = start[2]
    l = l0
    x = x0
    y = y0
    nck = len(checkpoints)
    ck_pos = np.zeros((nck, 3), dtype=np.int64)
    ck_dist = np.zeros(nck, dtype=np.int64)
    ck_label = np.zeros((nck, st.shape[0]), dtype=np.int64)
    visits = 1
    last_visit = 0
    ci = 0
    fam_slot = len(cdf) - 1 if has_family else -1
    pend = np.full(st.shape[0], NO_EXIT, dtype=np.int64)
    while ci < nck and checkpoints[ci] == 0:
        ck_pos[ci, 0] = l
        ck_pos[ci, 1] = x
        ck_pos[ci, 2] = y
        for i in range(st.shape[0]):
            ck_label[ci, i] = st[i, 1] if st[i, 0] == 0 else -1
        ci += 1
    for t in range(1, steps + 1):
        a = _bisect_right(cdf, np.random.random())
        if a == fam_slot:
            k = sample_radius(head_cdf, fam_R, fam_alpha, fam_reject)
            j = np.int64(np.random.random() * 4 * k)
            if j > 4 * k - 1:
                j = 4 * k - 1
            dx, dy = sphere_point(k, j)
            _plane_jump_track(t, l, x, y, dx, dy, cut_xyz, cut_ptr, bnd_keys, bnd_labels, bnd_ptr, st, pend, touch_times)
            x += dx
            y += dy
        else:
            for p in range(atom_ptr[a], atom_ptr[a + 1]):
                c = atom_codes[p]
                if c == VERT:
                    if x == 0 and y == 0:
                        l -= 1
                elif c == VERT_INV:
                    if x == 0 and y == 0:
                        l += 1
                elif c == XP:
                    x += 1
                elif c == XM:
                    x -= 1
                elif c == YP:
                    y += 1
                else:
                    y -= 1
                _track_key(t, comb_key(l, x, y), cut_keys, cut_ptr, bnd_keys, bnd_labels, bnd_ptr, st, pend, touch_times)
        _commit(t, st, pend)
        if l == l0 and x == x0 and y == y0:
            visits += 1
            last_visit = t
        while ci < nck and checkpoints[ci] == t:
            ck_pos[ci, 0] = l
            ck_pos[ci, 1] = x
            ck_pos[ci, 2] = y
            ck_dist[ci] = comb_distance(l0, x0, y0, l, x, y)
            for i in range(st.shape[0]):
                ck_label[ci, i] = st[i, 1] if st[i, 0] == 0 else -1
            ci += 1
    return ck_pos, ck_dist, ck_label, visits, last_visit


# --- chains on Z -----------------------------------------------------------------


@njit(cache=True, nogil=True)
def walk_zchain(seed, steps, x0, up, down, flip, checkpoints, radii, st, touch_times, flip_cap):
    """Walk of the sign-symmetric chain on Z: from x with n = |x| jump to -x
    with ``flip[n]``, move away from 0 with ``up[n]``, towards 0 otherwise.
    Sign flips are the jumps to -x (passing through 0 is not counted).

    Cut sets are ``[x0 - r, x0 + r]``; label 1 above, 0 below.
    """
    np.random.seed(seed)
    x = x0
    nck = len(checkpoints)
    ck_pos = np.zeros(nck, dtype=np.int64)
    ck_flips = np.zeros(nck, dtype=np.int64)
    ck_label = np.zeros((nck, st.shape[0]), dtype=np.int64)
    flip_times = np.full(flip_cap, -1, dtype=np.int64)
    nflips = 0
    visits = 1
    last_visit = 0
    ci = 0
    while ci < nck and checkpoints[ci] == 0:
        ck_pos[ci] = x
        for i in range(st.shape[0]):
            ck_label[ci, i] = st[i, 1] if st[i, 0] == 0 else -1
        ci += 1
    for t in range(1, steps + 1):
        n = abs(x)
        sgn = 1 if x >= 0 else -1
        u = np.random.random()
        if u < flip[n]:
            y = -x
            if nflips < flip_cap:
                flip_times[nflips] = t
            nflips += 1
        elif u < flip[n] + up[n]:
            y = sgn * (n + 1)
        else:
            y = sgn * (n - 1)
        x = y
        for i in range(st.shape[0]):
            r = radii[i]
            if abs(x - x0) <= r:
                _touch(i, t, st, touch_times)
            else:
                _outside(i, t, 1 if x > x0 else 0, st)
        if x == x0:
            visits += 1
            last_visit = t
        while ci < nck and checkpoints[ci] == t:
            ck_pos[ci] = x
            ck_flips[ci] = nflips
            for i in range(st.shape[0]):
                ck_label[ci, i] = st[i, 1] if st[i, 0] == 0 else -1
            ci += 1
    return ck_pos, ck_flips, ck_label, flip_times, nflips, visits, last_visit


@njit(cache=True, nogil=True)
def birthdeath_visits(seed, trials, n, M, up, down):
    """Visits to ``n`` (time 0 included) of the chain on N0 started at ``n``
    and stopped on reaching level ``M``. ``up[k] + down[k] <= 1``; the rest holds."""
    np.random.seed(seed)
    out = np.zeros(trials, dtype=np.int64)
    for tr in range(trials):
        k = n
        v = 1
        while k < M:
            u = np.random.random()
            if u < up[k]:
                k += 1
            elif u < up[k] + down[k]:
                k -= 1
            if k == n:
                v += 1
        out[tr] = v
    return out


@njit(cache=True, nogil=True)
def zchain_visits(seed, trials, horizon, x0, up, down, flip):
    """Visits to ``x0`` within ``horizon`` steps, per trial."""
    np.random.seed(seed)
    out = np.zeros(trials, dtype=np.int64)
    for tr in range(trials):
        x = x0
        v = 1
        for t in range(horizon):
            n = abs(x)
            sgn = 1 if x >= 0 else -1
            u = np.random.random()
            if u < flip[n]:
                x = -x
            elif u < flip[n] + up[n]:
                x = sgn * (n + 1)
            else:
                x = sgn * (n - 1)
            if x == x0:
                v += 1
        out[tr] = v
    return out
