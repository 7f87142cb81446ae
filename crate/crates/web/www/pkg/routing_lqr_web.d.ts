/* tslint:disable */
/* eslint-disable */

/**
 * Nash flow of the linear-latency network with the given slopes,
 * e.g. `[1, 2, 4]`.
 */
export function nash(slopes_json: string): string;

/**
 * JSON text of a built-in run configuration.
 */
export function preset_config(name: string): string;

/**
 * Names of the built-in run configurations.
 */
export function preset_names(): string;

/**
 * Critical regions of a three-edge configuration as planar polygons.
 */
export function regions(config_json: string): string;

/**
 * Receding-horizon trajectory from `x0` (a JSON array on the simplex).
 */
export function simulate(config_json: string, x0_json: string): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly nash: (a: number, b: number) => [number, number];
    readonly preset_config: (a: number, b: number) => [number, number];
    readonly preset_names: () => [number, number];
    readonly regions: (a: number, b: number) => [number, number];
    readonly simulate: (a: number, b: number, c: number, d: number) => [number, number];
    readonly __externref_table_alloc: () => number;
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
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
