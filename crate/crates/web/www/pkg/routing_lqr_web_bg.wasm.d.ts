/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const nash: (a: number, b: number) => [number, number];
export const preset_config: (a: number, b: number) => [number, number];
export const preset_names: () => [number, number];
export const regions: (a: number, b: number) => [number, number];
export const simulate: (a: number, b: number, c: number, d: number) => [number, number];
export const __externref_table_alloc: () => number;
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
