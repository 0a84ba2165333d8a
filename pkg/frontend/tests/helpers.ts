import { App } from '../src/app'
import { ServiceClient } from '../src/api'

export async function until(
  condition: () => boolean,
  timeoutMs = 10000,
  stepMs = 20,
): Promise<void> {
  const deadline = Date.now() + timeoutMs
  while (Date.now() < deadline) {
    if (condition()) return
    await new Promise((resolve) => setTimeout(resolve, stepMs))
  }
  throw new Error('condition never became true')
}

export function mount(base = ''): { root: HTMLElement; app: App } {
  document.body.innerHTML = '<div id="app"></div>'
  const root = document.getElementById('app')!
  const app = new App(root, new ServiceClient(base))
  return { root, app }
}

export function panel(root: HTMLElement, stage: string): HTMLElement {
  return root.querySelector(`.panel[data-stage="${stage}"]`)!
}

export function editor(root: HTMLElement, stage: string): HTMLTextAreaElement {
  return panel(root, stage).querySelector('textarea')!
}

export function setEditor(root: HTMLElement, stage: string, value: string): void {
  const area = editor(root, stage)
  area.value = value
  area.dispatchEvent(new Event('input', { bubbles: true }))
}

export async function startDefaultSession(root: HTMLElement): Promise<void> {
  await until(() => !root.querySelector<HTMLButtonElement>('#start')!.disabled)
  root.querySelector<HTMLButtonElement>('#start')!.click()
  await until(() => root.querySelector('#session-label')!.textContent !== '')
}

export async function send(root: HTMLElement, text: string): Promise<void> {
  const input = root.querySelector<HTMLInputElement>('#message')!
  input.value = text
  input.dispatchEvent(new Event('input', { bubbles: true }))
  const before = root.querySelectorAll('.bubble.system').length
  root.querySelector<HTMLFormElement>('#composer')!.requestSubmit()
  await until(() => root.querySelectorAll('.bubble.system').length === before + 1)
}
