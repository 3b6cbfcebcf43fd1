/* tslint:disable */
/* eslint-disable */

/**
 * Evolves `h0 = a cos(2πx) + b sin(4πx)` under the height equation and
 * returns `[t, ‖h‖_2]` pairs (derivative-scaled weights) at `samples`
 * log-spaced times up to `t_final`.
 */
export function decay_curve(a: number, b: number, t_final: number, samples: number): Float64Array;

/**
 * Dissipation constant `1 - f_2(y)`; negative once `y` passes `y_2*`.
 */
export function sigma(y: number): number;

/**
 * Rows `[u, η*, σ_D, κ⁻¹σ'_D(κu)]` flattened, for `steps` tilts in `[u_min, u_max]`.
 * The last column is NaN for `p = 1`.
 */
export function tension_table(beta: number, p: number, u_min: number, u_max: number, steps: number, kappa: number): Float64Array;

/**
 * Critical smallness threshold `y_s*`.
 */
export function threshold(s: number): number;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly decay_curve: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly sigma: (a: number) => number;
    readonly tension_table: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number, number];
    readonly threshold: (a: number) => [number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_start: () => void;
}

export type SyncInitInput = BufferSource | WebAssembly.Module;

/**
 * Instantiates the given `module`, which can either be bytes or
 * a precompiled `WebAssembly.Module`.
 *
 * @param {{ module: SyncInitInput }} module - Passing `SyncInitInput` directly is deprecated.
 *
 * @returns {InitOutput}
 */
export function initSync(module: { module: SyncInitInput } | SyncInitInput): InitOutput;

/**
 * If `module_or_path` is {RequestInfo} or {URL}, makes a request and
 * for everything else, calls `WebAssembly.instantiate` directly.
 *
 * @param {{ module_or_path: InitInput | Promise<InitInput> }} module_or_path - Passing `InitInput` directly is deprecated.
 *
 * @returns {Promise<InitOutput>}
 */
export default function __wbg_init (module_or_path?: { module_or_path: InitInput | Promise<InitInput> } | InitInput | Promise<InitInput>): Promise<InitOutput>;
