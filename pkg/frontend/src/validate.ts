/**
 * Tiny runtime validators for API payloads.
 *
 * Every response body is validated before it reaches the UI; a payload that
 * fails validation is treated exactly like a transport error.
 */

export type Validator<T> = (input: unknown) => T;

export class ValidationError extends Error {
  constructor(message: string) {
    super(`invalid payload: ${message}`);
    this.name = "ValidationError";
  }
}

export const isString: Validator<string> = (input) => {
  if (typeof input !== "string") throw new ValidationError(`expected string, got ${typeof input}`);
  return input;
};

export const isNumber: Validator<number> = (input) => {
  if (typeof input !== "number" || !Number.isFinite(input)) {
    throw new ValidationError(`expected finite number, got ${String(input)}`);
  }
  return input;
};

export function arrayOf<T>(inner: Validator<T>): Validator<T[]> {
  return (input) => {
    if (!Array.isArray(input)) throw new ValidationError("expected array");
    return input.map((item, i) => {
      try {
        return inner(item);
      } catch (err) {
        throw new ValidationError(`index ${i}: ${(err as Error).message}`);
      }
    });
  };
}

export function object<T extends Record<string, unknown>>(shape: {
  [K in keyof T]: Validator<T[K]>;
}): Validator<T> {
  return (input) => {
    if (typeof input !== "object" || input === null) {
      throw new ValidationError("expected object");
    }
    const out = {} as T;
    for (const key of Object.keys(shape) as (keyof T)[]) {
      try {
        out[key] = shape[key]((input as Record<string, unknown>)[key as string]);
      } catch (err) {
        throw new ValidationError(`field ${String(key)}: ${(err as Error).message}`);
      }
    }
    return out;
  };
}

export function nullable<T>(inner: Validator<T>): Validator<T | null> {
  return (input) => (input === null || input === undefined ? null : inner(input));
}
