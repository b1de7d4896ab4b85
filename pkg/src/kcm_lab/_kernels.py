"""Compiled event-driven kernels.

These are the batch workhorses behind the experiment layer. They implement the
same rules as :mod:`kcm_lab.dynamics` (checked against it event for event in the
test-suite) on flat uint8 arrays.

Boundary codes: 0 interval ``[1, L]`` with frozen zeros at ``0`` and ``L + 1``;
1 left half-line (frozen zero at 0, ghost ones left of the window); 3 full line
(ghost ones on both sides of the window).
Process codes: 0 FA-1f, 1 threshold contact.
"""

import numba as nb
import numpy as np

from .rng import fast_forward, ring_gap, ring_mark, site_key

B_INTERVAL = 0
B_HALFLINE = 1
B_LINE = 3

K_FA = 0
K_TC = 1

ST_OK = 0
ST_CAP = 1
ST_EXTINCT = 2

NO_SITE = np.iinfo(np.int64).max


# ------------------------------------------------------------------ slabs ----
#
# Used where the exact global order of rings matters (first-passage times).
# Time is cut into slabs holding ~2048 rings. A slab is generated from the
# per-site cursors (``nxt`` = time of the next unprocessed ring, ``cnt`` = its
# index), bucket-sorted by time and processed in ``(time, site)`` order, which
# is the global ring order with ties broken by site ascending. When the window
# grows inside a slab the unprocessed tail is rewound into the cursors and a
# fresh slab starts at the current time, so the event order never depends on
# where slab boundaries fall.

_SLAB_EVENTS = 2048.0
_SLAB_PER_SITE = 8.0
_SLAB_MAX = 16384


@nb.njit(cache=True)
def _slab_width(n_active, t0, horizon):
    # at least a few rings per site, so scanning the cursors stays amortised
    n = max(n_active, 1)
    dt = max(_SLAB_EVENTS, min(_SLAB_PER_SITE * n, _SLAB_MAX)) / n
    return min(t0 + dt, horizon)


@nb.njit(cache=True)
def _gen_slab(keys, nxt, cnt, a, b, m, t1, last, buf_t, buf_i, buf_j):
    """Emit every pending ring of indices ``a..b`` with time ``< t1``
    (``<= t1`` when ``last``) after position ``m``, advancing the cursors.

    Stops early when the buffer is full; returns ``(m, next index)`` so the
    caller can grow the buffer and resume.
    """
    cap = buf_t.shape[0]
    for i in range(a, b + 1):
        t = nxt[i]
        j = cnt[i]
        key = keys[i]
        while t < t1 or (last and t == t1):
            if m == cap:
                nxt[i] = t
                cnt[i] = j
                return m, i
            buf_t[m] = t
            buf_i[m] = i
            buf_j[m] = j
            m += 1
            j += 1
            t += ring_gap(key, j)
        nxt[i] = t
        cnt[i] = j
    return m, b + 1


@nb.njit(cache=True)
def _sort_slab(buf_t, buf_i, buf_j, m, t0, t1, out_t, out_i, out_j, work):
    """Bucket sort by time (about two buckets per ring), inserting each ring
    into place inside its bucket as it is scattered."""
    nbk = 1
    while nbk < 2 * m:
        nbk *= 2
    start = work[:nbk + 1]
    fill = work[nbk + 1:2 * nbk + 1]
    start[:] = 0
    scale = nbk / (t1 - t0) if t1 > t0 else 0.0
    for k in range(m):
        bk = min(max(np.int64((buf_t[k] - t0) * scale), 0), nbk - 1)
        start[bk + 1] += 1
    for bk in range(nbk):
        start[bk + 1] += start[bk]
    fill[:] = start[:nbk]
    for k in range(m):
        tt = buf_t[k]
        bk = min(max(np.int64((tt - t0) * scale), 0), nbk - 1)
        ii = buf_i[k]
        jj = buf_j[k]
        pos = fill[bk]
        fill[bk] = pos + 1
        b0 = start[bk]
        r = pos - 1
        while r >= b0 and (out_t[r] > tt or (out_t[r] == tt and out_i[r] > ii)):
            out_t[r + 1] = out_t[r]
            out_i[r + 1] = out_i[r]
            out_j[r + 1] = out_j[r]
            r -= 1
        out_t[r + 1] = tt
        out_i[r + 1] = ii
        out_j[r + 1] = jj


@nb.njit(cache=True)
def _rewind(out_t, out_i, out_j, k, m, nxt, cnt):
    """Hand the unprocessed rings ``k..m-1`` back to the per-site cursors."""
    for r in range(m - 1, k - 1, -1):
        i = out_i[r]
        nxt[i] = out_t[r]
        cnt[i] = out_j[r]


@nb.njit(cache=True)
def _grow_buf(buf, m, cap):
    out = np.empty(cap, dtype=buf.dtype)
    out[:m] = buf[:m]
    return out


@nb.njit(cache=True)
def _sorted_slab(keys, nxt, cnt, a, b, t0, t1, last, bufs):
    buf_t, buf_i, buf_j, out_t, out_i, out_j, work = bufs
    m = 0
    i = a
    while True:
        m, i = _gen_slab(keys, nxt, cnt, i, b, m, t1, last, buf_t, buf_i, buf_j)
        if i > b:
            break
        cap = 2 * buf_t.shape[0]
        buf_t = _grow_buf(buf_t, m, cap)
        buf_i = _grow_buf(buf_i, m, cap)
        buf_j = _grow_buf(buf_j, m, cap)
    if out_t.shape[0] < m:
        cap = buf_t.shape[0]
        out_t = np.empty(cap)
        out_i = np.empty(cap, dtype=np.int64)
        out_j = np.empty(cap, dtype=np.int64)
    if work.shape[0] < 8 * m + 2:
        work = np.empty(8 * buf_t.shape[0] + 2, dtype=np.int64)
    _sort_slab(buf_t, buf_i, buf_j, m, t0, t1, out_t, out_i, out_j, work)
    return m, (buf_t, buf_i, buf_j, out_t, out_i, out_j, work)


@nb.njit(cache=True)
def _new_bufs(n):
    cap = 2 * int(_SLAB_EVENTS) + 64
    return (np.empty(cap), np.empty(cap, dtype=np.int64), np.empty(cap, dtype=np.int64),
            np.empty(cap), np.empty(cap, dtype=np.int64), np.empty(cap, dtype=np.int64),
            np.empty(8 * cap + 2, dtype=np.int64))


# ------------------------------------------------------------ local order ----
#
# A ring at x reads only x - 1, x and x + 1, so rings at non-adjacent sites
# commute. Processing a ring as soon as it is earlier than the pending rings
# of both neighbours (ties go to the lower site) therefore reproduces the
# global (time, site) order exactly, with no sorting. ``nxt[i]`` is the time
# of the next unprocessed ring at index i (``inf`` for frozen or ghost slots)
# and ``cnt[i]`` its index in the site's stream; ``gnx[i]`` caches the gap
# after that ring so the next readiness test does not wait on the generator.
# A sweep processes every ring with time ``<= t1``; afterwards the array holds
# the configuration at ``t1``.


@nb.njit(cache=True)
def _ready(nxt, i, t1):
    t = nxt[i]
    # bitwise on purpose: a short-circuit chain here compiles to slow code
    return (t <= t1) & (t < nxt[i - 1]) & (t <= nxt[i + 1])


@nb.njit(cache=True)
def _seed_stack(nxt, a, b, t1, stack, inst):
    sp = 0
    for i in range(a, b + 1):
        if _ready(nxt, i, t1):
            inst[i] = 1
            stack[sp] = i
            sp += 1
    return sp


@nb.njit(cache=True)
def _clear_stack(stack, inst, sp):
    for k in range(sp):
        inst[stack[k]] = 0


# ------------------------------------------------------------ update rule ----

@nb.njit(cache=True, inline="always")
def _update(kind, cur, left, right, mark):
    """New value of a ringing site given neighbours and the event mark."""
    c = 1 - left * right
    if c == 1:
        return mark
    if kind == K_TC and cur == 0 and mark == 1:
        return np.uint8(1)
    return cur


@nb.njit(cache=True, inline="always")
def _map_site(x, m_off, m_sign):
    return m_off + m_sign * x


# --------------------------------------------------------------- interval ----

@nb.njit(cache=True)
def _sweep_interval(bits, keys, nxt, gnx, cnt, stack, inst, L, t1, kind, p):
    sp = _seed_stack(nxt, 1, L, t1, stack, inst)
    n = 0
    while sp > 0:
        sp -= 1
        i = stack[sp]
        inst[i] = 0
        key = keys[i]
        while _ready(nxt, i, t1):
            j = cnt[i]
            nxt[i] += gnx[i]
            gnx[i] = ring_gap(key, j + 2)
            cnt[i] = j + 1
            mark = ring_mark(key, j, p)
            if mark != bits[i]:
                bits[i] = _update(kind, bits[i], bits[i - 1], bits[i + 1], mark)
            n += 1
        if _ready(nxt, i - 1, t1) & (inst[i - 1] == 0):
            inst[i - 1] = 1
            stack[sp] = i - 1
            sp += 1
        if _ready(nxt, i + 1, t1) & (inst[i + 1] == 0):
            inst[i + 1] = 1
            stack[sp] = i + 1
            sp += 1
    return n


@nb.njit(cache=True, nogil=True)
def run_interval(seed, p, kind, init_bits, sample_times, horizon,
                 win_lo, w, z_lo, z_hi, full, m_off, m_sign):
    """Evolve on ``[1, L]`` up to ``horizon`` and record at each sample time:

    * the code of the ``w``-bit window starting at ``win_lo`` (first site is the
      most significant bit), ``w <= 62``;
    * the number of zeros in ``[z_lo, z_hi]``;
    * the full configuration if ``full``.

    Sample times must be sorted and ``<= horizon``. Returns ``(codes, zeros,
    snaps, n_events)``.
    """
    L = init_bits.shape[0]
    # index i <-> site i; 0 and L + 1 are the frozen boundary zeros
    bits = np.zeros(L + 2, dtype=np.uint8)
    bits[1:L + 1] = init_bits
    keys = np.zeros(L + 2, dtype=np.uint64)
    nxt = np.full(L + 2, np.inf)
    cnt = np.zeros(L + 2, dtype=np.int64)
    gnx = np.zeros(L + 2)
    for x in range(1, L + 1):
        keys[x] = site_key(seed, _map_site(x, m_off, m_sign))
        nxt[x] = ring_gap(keys[x], 0)
        gnx[x] = ring_gap(keys[x], 1)
    stack = np.empty(L + 2, dtype=np.int64)
    inst = np.zeros(L + 2, dtype=np.uint8)
    ns = sample_times.shape[0]
    codes = np.zeros(ns, dtype=np.int64)
    zeros = np.zeros(ns, dtype=np.int64)
    if full:
        snaps = np.zeros((ns, L), dtype=np.uint8)
    else:
        snaps = np.zeros((0, L), dtype=np.uint8)
    n_events = 0
    for k in range(ns):
        n_events += _sweep_interval(bits, keys, nxt, gnx, cnt, stack, inst, L, sample_times[k], kind, p)
        _record_interval(bits, k, codes, zeros, snaps, win_lo, w, z_lo, z_hi, full)
    n_events += _sweep_interval(bits, keys, nxt, gnx, cnt, stack, inst, L, horizon, kind, p)
    return codes, zeros, snaps, n_events


@nb.njit(cache=True)
def _record_interval(bits, k, codes, zeros, snaps, win_lo, w, z_lo, z_hi, full):
    c = 0
    for x in range(win_lo, win_lo + w):
        c = (c << 1) | np.int64(bits[x])
    codes[k] = c
    z = 0
    for x in range(z_lo, z_hi + 1):
        if bits[x] == 0:
            z += 1
    zeros[k] = z
    if full:
        snaps[k, :] = bits[1:bits.shape[0] - 1]


@nb.njit(cache=True)
def _max_run(bits, a, b):
    best = 0
    run = 0
    for x in range(a, b + 1):
        if bits[x] == 1:
            run += 1
            if run > best:
                best = run
        else:
            run = 0
    return best


@nb.njit(cache=True, nogil=True)
def run_two_front(seed, p, init_bits, x0, y0, d, horizon, trace_dt, m_off, m_sign):
    """Track the inward fronts of the cluster ``(x0, y0)`` on ``[1, L]``.

    ``X`` is the rightmost zero in ``[0, M]`` and ``Y`` the leftmost zero in
    ``[M, L + 1]`` with ``M = (x0 + y0) / 2``. Stops at the first time
    ``Y - X <= d``. Returns ``(tau, met, reg, run_left, run_right, trace_t,
    trace_x, trace_y, n_events)``. ``reg`` is true when, strictly before
    ``tau``, ``X < M - 1`` and ``Y > M + 1`` held throughout; ``run_left`` and
    ``run_right`` are the longest runs of ones in ``[x0, X_tau]`` and
    ``[Y_tau, y0]``.
    """
    L = init_bits.shape[0]
    bits = np.zeros(L + 2, dtype=np.uint8)
    bits[1:L + 1] = init_bits
    M2 = x0 + y0  # twice the midpoint
    X = 0
    for x in range(0, L + 2):
        if 2 * x <= M2 and bits[x] == 0:
            X = x
    Y = L + 1
    for x in range(L + 1, -1, -1):
        if 2 * x >= M2 and bits[x] == 0:
            Y = x
    ntr = int(horizon / trace_dt) + 3 if trace_dt > 0 else 2
    trace_t = np.empty(ntr)
    trace_x = np.empty(ntr, dtype=np.int64)
    trace_y = np.empty(ntr, dtype=np.int64)
    trace_t[0] = 0.0
    trace_x[0] = X
    trace_y[0] = Y
    ktr = 1
    reg = 2 * X < M2 - 2 and 2 * Y > M2 + 2
    if Y - X <= d:
        return (0.0, True, True, _max_run(bits, x0, X), _max_run(bits, Y, y0),
                trace_t[:1], trace_x[:1], trace_y[:1], 0)
    keys = np.zeros(L + 2, dtype=np.uint64)
    nxt = np.full(L + 2, np.inf)
    cnt = np.zeros(L + 2, dtype=np.int64)
    for x in range(1, L + 1):
        keys[x] = site_key(seed, _map_site(x, m_off, m_sign))
        nxt[x] = ring_gap(keys[x], 0)
    n_events = 0
    bufs = _new_bufs(L)
    t0 = 0.0
    while t0 < horizon:
        t1 = _slab_width(L, t0, horizon)
        last = t1 >= horizon
        m, bufs = _sorted_slab(keys, nxt, cnt, 1, L, t0, t1, last, bufs)
        out_t, out_i, out_j = bufs[3], bufs[4], bufs[5]
        for r in range(m):
            t = out_t[r]
            x = out_i[r]
            if trace_dt > 0:
                while ktr < ntr - 1 and ktr * trace_dt < t:
                    trace_t[ktr] = ktr * trace_dt
                    trace_x[ktr] = X
                    trace_y[ktr] = Y
                    ktr += 1
            old = bits[x]
            new = _update(K_FA, old, bits[x - 1], bits[x + 1], ring_mark(keys[x], out_j[r], p))
            n_events += 1
            if new == old:
                continue
            bits[x] = new
            if new == 0:
                if 2 * x <= M2 and x > X:
                    X = x
                if 2 * x >= M2 and x < Y:
                    Y = x
            else:
                if x == X:
                    X = x - 1
                    while bits[X] != 0:
                        X -= 1
                if x == Y:
                    Y = x + 1
                    while bits[Y] != 0:
                        Y += 1
            if Y - X <= d:
                trace_t[ktr] = t
                trace_x[ktr] = X
                trace_y[ktr] = Y
                ktr += 1
                return (t, True, reg, _max_run(bits, x0, X), _max_run(bits, Y, y0),
                        trace_t[:ktr], trace_x[:ktr], trace_y[:ktr], n_events)
            if not (2 * X < M2 - 2 and 2 * Y > M2 + 2):
                reg = False
        t0 = t1
    return (horizon, False, reg, _max_run(bits, x0, X), _max_run(bits, Y, y0),
            trace_t[:ktr], trace_x[:ktr], trace_y[:ktr], n_events)



# ------------------------------------------------------ open boundaries ----

@nb.njit(cache=True)
def _grow(arr, off, ncap, fill):
    out = np.full(ncap, fill, dtype=arr.dtype)
    out[off:off + arr.shape[0]] = arr
    return out


@nb.njit(cache=True)
def _join_sites(seed, keys, nxt, gnx, cnt, base, a, b, t, m_off, m_sign):
    # streams of sites entering the window at time t, positioned after t
    for x in range(a, b + 1):
        ii = x - base
        key = site_key(seed, _map_site(x, m_off, m_sign))
        keys[ii] = key
        tt, j = fast_forward(key, t)
        nxt[ii] = tt
        cnt[ii] = j
        gnx[ii] = ring_gap(key, j + 1)


@nb.njit(cache=True)
def _sweep_open(bits, keys, nxt, gnx, cnt, stack, inst, base, lo, hi, t1, kind, bkind, p, st, tg):
    """Process rings up to ``t1``. Returns 0 when done, 1 when a site within 2
    of an edge just turned empty (its site and time go to ``st[2]``/``tg[0]``;
    the caller grows the window and sweeps again), 2 on extinction.

    ``st`` holds ``front, n_events, growth site``.
    """
    front = st[0]
    n = st[1]
    sp = _seed_stack(nxt, lo - base, hi - base, t1, stack, inst)
    flag = 0
    while sp > 0 and flag == 0:
        sp -= 1
        i = stack[sp]
        inst[i] = 0
        key = keys[i]
        while _ready(nxt, i, t1):
            j = cnt[i]
            t = nxt[i]
            nxt[i] = t + gnx[i]
            gnx[i] = ring_gap(key, j + 2)
            cnt[i] = j + 1
            n += 1
            old = bits[i]
            mark = ring_mark(key, j, p)
            if mark == old:
                # a ring never changes a site whose value equals its mark
                continue
            new = _update(kind, old, bits[i - 1], bits[i + 1], mark)
            if new == old:
                continue
            bits[i] = new
            s = i + base
            if new == 0:
                if s < front:
                    front = s
                if s - lo < 2 or (bkind == B_LINE and hi - s < 2):
                    flag = 1
                    st[2] = s
                    tg[0] = t
                    break
            elif s == front:
                f = s + 1
                while f <= hi and bits[f - base] != 0:
                    f += 1
                if f <= hi:
                    front = f
                elif bkind == B_HALFLINE:
                    front = 0
                else:
                    # no zero left anywhere: all-ones is absorbing
                    front = NO_SITE
                    flag = 2
                    break
        if flag == 0:
            if _ready(nxt, i - 1, t1) & (inst[i - 1] == 0):
                inst[i - 1] = 1
                stack[sp] = i - 1
                sp += 1
            if _ready(nxt, i + 1, t1) & (inst[i + 1] == 0):
                inst[i + 1] = 1
                stack[sp] = i + 1
                sp += 1
    _clear_stack(stack, inst, sp)
    st[0] = front
    st[1] = n
    return flag


@nb.njit(cache=True, nogil=True)
def run_open(seed, p, kind, bkind, init_bits, init_lo, guard, cap_limit,
             sample_times, horizon, w, y_site, m_off, m_sign):
    """Evolve on the left half-line (``bkind=1``) or the full line (``bkind=3``).

    ``init_bits`` holds sites ``init_lo, init_lo + 1, ...``; everything outside
    is a ghost one (and site 0 is a frozen zero on the half-line, where the
    stored window must end at -1). The window keeps ``guard`` sites beyond the
    outermost zero and grows by ``guard`` when a zero comes within 2 sites of
    an edge; sites joining late skip the rings they missed, which were no-ops.
    Records at each (sorted) sample time: the front (leftmost zero,
    ``NO_SITE`` once extinct), the ``w``-bit code of sites
    ``front + 1 .. front + w`` and the longest run of ones in
    ``[front, y_site]``.

    Returns ``(fronts, codes, runs, n_events, status, lo_final)``.
    """
    m0 = init_bits.shape[0]
    if bkind == B_HALFLINE:
        hi = -1
    else:
        hi = init_lo + m0 - 1
    front = NO_SITE
    back = NO_SITE
    for i in range(m0):
        if init_bits[i] == 0:
            if front == NO_SITE:
                front = init_lo + i
            back = init_lo + i
    if bkind == B_HALFLINE and front == NO_SITE:
        front = 0
    lo = init_lo
    if front != NO_SITE and front - guard < lo:
        lo = front - guard
    if bkind == B_LINE and back != NO_SITE and back + guard > hi:
        hi = back + guard
    # index = site - base; spare slots beyond the window read as ghost ones
    width = hi - lo + 1
    base = lo - width - 1
    cap = 3 * width + 2
    bits = np.ones(cap, dtype=np.uint8)
    for i in range(m0):
        bits[init_lo + i - base] = init_bits[i]
    if bkind == B_HALFLINE:
        bits[0 - base] = 0
    keys = np.zeros(cap, dtype=np.uint64)
    nxt = np.full(cap, np.inf)
    gnx = np.zeros(cap)
    cnt = np.zeros(cap, dtype=np.int64)
    _join_sites(seed, keys, nxt, gnx, cnt, base, lo, hi, 0.0, m_off, m_sign)
    stack = np.empty(cap, dtype=np.int64)
    inst = np.zeros(cap, dtype=np.uint8)

    ns = sample_times.shape[0]
    fronts = np.full(ns, NO_SITE, dtype=np.int64)
    codes = np.zeros(ns, dtype=np.int64)
    runs = np.zeros(ns, dtype=np.int64)
    st = np.zeros(3, dtype=np.int64)
    st[0] = front
    tg = np.zeros(1)
    status = ST_EXTINCT if front == NO_SITE else ST_OK
    k = 0
    while k <= ns and status == ST_OK:
        t1 = sample_times[k] if k < ns else horizon
        flag = _sweep_open(bits, keys, nxt, gnx, cnt, stack, inst, base, lo, hi, t1,
                           kind, bkind, p, st, tg)
        if flag == 0:
            if k < ns:
                _record_open(bits, base, st[0], k, fronts, codes, runs, w, y_site)
            k += 1
            continue
        if flag == 2:
            status = ST_EXTINCT
            break
        s = st[2]
        t = tg[0]
        new_lo = lo - guard if s - lo < 2 else lo
        new_hi = hi + guard if bkind == B_LINE and hi - s < 2 else hi
        if new_hi - new_lo + 1 > cap_limit:
            status = ST_CAP
            break
        if new_lo - 1 < base or new_hi + 1 >= base + cap:
            width = new_hi - new_lo + 1
            nbase = new_lo - width - 1
            ncap = 3 * width + 2
            off = base - nbase
            bits = _grow(bits, off, ncap, np.uint8(1))
            keys = _grow(keys, off, ncap, np.uint64(0))
            nxt = _grow(nxt, off, ncap, np.inf)
            gnx = _grow(gnx, off, ncap, 0.0)
            cnt = _grow(cnt, off, ncap, np.int64(0))
            stack = np.empty(ncap, dtype=np.int64)
            inst = np.zeros(ncap, dtype=np.uint8)
            base = nbase
            cap = ncap
        _join_sites(seed, keys, nxt, gnx, cnt, base, new_lo, lo - 1, t, m_off, m_sign)
        _join_sites(seed, keys, nxt, gnx, cnt, base, hi + 1, new_hi, t, m_off, m_sign)
        lo = new_lo
        hi = new_hi
    if status == ST_EXTINCT:
        # the all-ones state is absorbing: later samples see no front
        for kk in range(k, ns):
            fronts[kk] = NO_SITE
    elif status == ST_CAP:
        for kk in range(k, ns):
            fronts[kk] = NO_SITE
    return fronts, codes, runs, st[1], status, lo


@nb.njit(cache=True)
def _record_open(bits, base, front, k, fronts, codes, runs, w, y_site):
    # sites outside the stored array are ghost ones; the half-line origin is
    # stored as a zero, so direct reads are exact wherever the window reaches
    fronts[k] = front
    if front == NO_SITE:
        return
    n = bits.shape[0]
    c = 0
    for x in range(front + 1, front + 1 + w):
        i = x - base
        b = bits[i] if 0 <= i < n else np.uint8(1)
        c = (c << 1) | np.int64(b)
    codes[k] = c
    best = 0
    run = 0
    for x in range(front, y_site + 1):
        i = x - base
        b = bits[i] if 0 <= i < n else np.uint8(1)
        if b == 1:
            run += 1
            if run > best:
                best = run
        else:
            run = 0
    runs[k] = best



# ----------------------------------------------------------- domination ----

@nb.njit(cache=True)
def _sweep_dom(eta, zeta, keys, nxt, gnx, cnt, stack, inst, base, lo, hi, t1, p, st, tg):
    # st: violations, events, eta front, growth site
    viol = st[0]
    n = st[1]
    ef = st[2]
    sp = _seed_stack(nxt, lo - base, hi - base, t1, stack, inst)
    flag = 0
    while sp > 0 and flag == 0:
        sp -= 1
        i = stack[sp]
        inst[i] = 0
        key = keys[i]
        s = i + base
        while _ready(nxt, i, t1):
            j = cnt[i]
            t = nxt[i]
            mark = ring_mark(key, j, p)
            nxt[i] = t + gnx[i]
            gnx[i] = ring_gap(key, j + 2)
            cnt[i] = j + 1
            n += 1
            zold = zeta[i]
            znew = _update(K_TC, zold, zeta[i - 1], zeta[i + 1], mark)
            zeta[i] = znew
            eold = eta[i]
            enew = eold
            if s < 0:
                enew = _update(K_FA, eold, eta[i - 1], eta[i + 1], mark)
                eta[i] = enew
                if enew == 0 and s < ef:
                    ef = s
                elif enew == 1 and eold == 0 and s == ef:
                    f = s + 1
                    while eta[f - base] != 0:
                        f += 1
                    ef = f
            if s <= 0 and enew > znew:
                viol += 1
            if (s - lo < 2 or hi - s < 2) and ((znew == 0 and zold == 1) or (enew == 0 and eold == 1)):
                flag = 1
                st[3] = s
                tg[0] = t
                break
        if flag == 0:
            if _ready(nxt, i - 1, t1) & (inst[i - 1] == 0):
                inst[i - 1] = 1
                stack[sp] = i - 1
                sp += 1
            if _ready(nxt, i + 1, t1) & (inst[i + 1] == 0):
                inst[i + 1] = 1
                stack[sp] = i + 1
                sp += 1
    _clear_stack(stack, inst, sp)
    st[0] = viol
    st[1] = n
    st[2] = ef
    return flag


@nb.njit(cache=True, nogil=True)
def run_domination(seed, p, init_eta, init_lo, guard, horizon):
    """FA-1f ``eta`` on the left half-line coupled with the threshold contact
    process ``zeta`` on the line, started from a single zero at the front of
    ``eta``, both driven by the same rings.

    The order ``eta <= zeta`` on sites ``<= 0`` is checked in full at both
    ends and, in between, at the ringing site after every ring (the only site
    that can change). Returns ``(violations, n_events, eta_front,
    zeta_leftmost_zero)``.
    """
    m0 = init_eta.shape[0]
    x0 = 0
    for i in range(m0):
        if init_eta[i] == 0:
            x0 = init_lo + i
            break
    lo = min(init_lo, x0 - guard)
    hi = guard
    width = hi - lo + 1
    base = lo - width - 1
    cap = 3 * width + 2
    eta = np.ones(cap, dtype=np.uint8)
    zeta = np.ones(cap, dtype=np.uint8)
    for i in range(m0):
        eta[init_lo + i - base] = init_eta[i]
    eta[0 - base] = 0
    zeta[x0 - base] = 0
    keys = np.zeros(cap, dtype=np.uint64)
    nxt = np.full(cap, np.inf)
    gnx = np.zeros(cap)
    cnt = np.zeros(cap, dtype=np.int64)
    _join_sites(seed, keys, nxt, gnx, cnt, base, lo, hi, 0.0, 0, 1)
    stack = np.empty(cap, dtype=np.int64)
    inst = np.zeros(cap, dtype=np.uint8)
    st = np.zeros(4, dtype=np.int64)
    tg = np.zeros(1)
    for x in range(lo, 1):
        if eta[x - base] > zeta[x - base]:
            st[0] += 1
    st[2] = x0
    while True:
        flag = _sweep_dom(eta, zeta, keys, nxt, gnx, cnt, stack, inst, base, lo, hi, horizon, p, st, tg)
        if flag == 0:
            break
        s = st[3]
        t = tg[0]
        new_lo = lo - guard if s - lo < 2 else lo
        new_hi = hi + guard if hi - s < 2 else hi
        if new_lo - 1 < base or new_hi + 1 >= base + cap:
            width = new_hi - new_lo + 1
            nbase = new_lo - width - 1
            ncap = 3 * width + 2
            off = base - nbase
            eta = _grow(eta, off, ncap, np.uint8(1))
            zeta = _grow(zeta, off, ncap, np.uint8(1))
            keys = _grow(keys, off, ncap, np.uint64(0))
            nxt = _grow(nxt, off, ncap, np.inf)
            gnx = _grow(gnx, off, ncap, 0.0)
            cnt = _grow(cnt, off, ncap, np.int64(0))
            stack = np.empty(ncap, dtype=np.int64)
            inst = np.zeros(ncap, dtype=np.uint8)
            base = nbase
            cap = ncap
        _join_sites(seed, keys, nxt, gnx, cnt, base, new_lo, lo - 1, t, 0, 1)
        _join_sites(seed, keys, nxt, gnx, cnt, base, hi + 1, new_hi, t, 0, 1)
        lo = new_lo
        hi = new_hi
    violations = st[0]
    for x in range(lo, 1):
        if eta[x - base] > zeta[x - base]:
            violations += 1
    zeta_front = NO_SITE
    for x in range(lo, hi + 1):
        if zeta[x - base] == 0:
            zeta_front = x
            break
    return violations, st[1], st[2], zeta_front
