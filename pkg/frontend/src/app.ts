/** The debugging workbench: assemble a system from the registry, chat with
 *  it, inspect every stage output as editable JSON (left side), and recall a
 *  turn from a corrected output. All displayed state originates from service
 *  responses; edits touch nothing until a recall succeeds. */

import { ServiceClient, ServiceError, StageTrace } from './api'
import { parseEditorText } from './validate'

export const STAGES = ['nlu', 'dst', 'policy', 'nlg'] as const
export type Stage = (typeof STAGES)[number]

const PANEL_TITLES: Record<Stage, string> = {
  nlu: 'User dialogue acts (NLU)',
  dst: 'Belief state (DST)',
  policy: 'System dialogue acts (Policy)',
  nlg: 'System response (NLG)',
}

function stageText(trace: StageTrace, stage: Stage): string {
  switch (stage) {
    case 'nlu':
      return trace.nlu_acts === null ? '' : JSON.stringify(trace.nlu_acts, null, 2)
    case 'dst':
      return trace.belief === null ? '' : JSON.stringify(trace.belief, null, 2)
    case 'policy':
      return JSON.stringify(trace.policy_acts, null, 2)
    case 'nlg':
      return trace.response ?? ''
  }
}

export class App {
  private registryLoaded = false
  private sessionId: string | null = null
  private lastTrace: StageTrace | null = null
  private busy = false
  private lastSystemBubble: HTMLElement | null = null

  constructor(
    private readonly root: HTMLElement,
    private readonly client: ServiceClient,
  ) {
    this.render()
    void this.loadRegistry()
  }

  private element<T extends HTMLElement>(selector: string): T {
    const found = this.root.querySelector(selector)
    if (!found) throw new Error(`missing element ${selector}`)
    return found as T
  }

  private render(): void {
    this.root.innerHTML = `
      <header>
        <h1>dialogue-forge</h1>
        <div id="banner" class="banner hidden">
          <span id="banner-text"></span>
          <button id="retry" type="button">Retry</button>
        </div>
        <div id="assembly">
          ${STAGES.map(
            (stage) => `
            <label>${stage.toUpperCase()}
              <select id="select-${stage}" disabled></select>
            </label>`,
          ).join('')}
          <label>Pack <select id="select-pack" disabled></select></label>
          <button id="start" type="button" disabled>Start session</button>
          <span id="session-label"></span>
        </div>
      </header>
      <main class="workspace">
        <section id="panels">
          ${STAGES.map(
            (stage) => `
            <div class="panel" data-stage="${stage}">
              <div class="panel-head">
                <h3>${PANEL_TITLES[stage]}</h3>
                <span class="badge overridden hidden">overridden</span>
                <span class="badge pending hidden">edited</span>
              </div>
              <textarea spellcheck="false" disabled></textarea>
              <div class="panel-actions">
                <button class="recall hidden" type="button">Recall ${stage.toUpperCase()}</button>
                <button class="revert hidden" type="button">Revert</button>
              </div>
              <p class="panel-error hidden"></p>
            </div>`,
          ).join('')}
        </section>
        <section id="chat">
          <div id="transcript"></div>
          <form id="composer">
            <input id="message" type="text" autocomplete="off"
                   placeholder="Say something to the system" disabled>
            <button id="send" type="submit" disabled>Send</button>
          </form>
        </section>
      </main>
    `
    this.element<HTMLButtonElement>('#retry').addEventListener('click', () => {
      void this.loadRegistry()
    })
    this.element<HTMLButtonElement>('#start').addEventListener('click', () => {
      void this.startSession()
    })
    this.element<HTMLFormElement>('#composer').addEventListener('submit', (event) => {
      event.preventDefault()
      void this.sendMessage()
    })
    this.element<HTMLInputElement>('#message').addEventListener('input', () => {
      this.refreshComposer()
    })
    for (const stage of STAGES) {
      const panel = this.panel(stage)
      panel.querySelector('textarea')!.addEventListener('input', () => {
        this.markEdited(stage)
      })
      panel.querySelector<HTMLButtonElement>('.recall')!.addEventListener('click', () => {
        void this.recall(stage)
      })
      panel.querySelector<HTMLButtonElement>('.revert')!.addEventListener('click', () => {
        this.revert(stage)
      })
    }
  }

  private panel(stage: Stage): HTMLElement {
    return this.element(`.panel[data-stage="${stage}"]`)
  }

  private showBanner(message: string): void {
    this.element('#banner').classList.remove('hidden')
    this.element('#banner-text').textContent = message
  }

  private hideBanner(): void {
    this.element('#banner').classList.add('hidden')
  }

  private async loadRegistry(): Promise<void> {
    this.hideBanner()
    try {
      const registry = await this.client.getRegistry()
      for (const stage of STAGES) {
        const select = this.element<HTMLSelectElement>(`#select-${stage}`)
        select.innerHTML = ''
        for (const option of registry.stages[stage] ?? []) {
          const element = document.createElement('option')
          element.value = option.name
          element.textContent = option.name
          select.appendChild(element)
        }
        select.disabled = false
      }
      const packs = this.element<HTMLSelectElement>('#select-pack')
      packs.innerHTML = ''
      for (const name of registry.packs) {
        const element = document.createElement('option')
        element.value = name
        element.textContent = name
        packs.appendChild(element)
      }
      packs.disabled = false
      this.element<HTMLButtonElement>('#start').disabled = false
      this.registryLoaded = true
    } catch {
      this.registryLoaded = false
      this.showBanner('The service is unreachable.')
    }
  }

  selections(): Record<string, string> {
    const chosen: Record<string, string> = {}
    for (const stage of STAGES) {
      chosen[stage] = this.element<HTMLSelectElement>(`#select-${stage}`).value
    }
    return chosen
  }

  private async startSession(): Promise<void> {
    if (!this.registryLoaded || this.busy) return
    this.setBusy(true)
    try {
      const pack = this.element<HTMLSelectElement>('#select-pack').value
      const created = await this.client.createSession(this.selections(), pack)
      this.sessionId = created.id
      this.lastTrace = null
      this.lastSystemBubble = null
      this.element('#session-label').textContent = `session ${created.id}`
      this.element('#transcript').innerHTML = ''
      for (const stage of STAGES) this.resetPanel(stage)
      this.element<HTMLInputElement>('#message').disabled = false
    } catch (error) {
      this.showBanner(
        error instanceof ServiceError
          ? `Could not start a session: ${error.message}`
          : 'The service is unreachable.',
      )
    } finally {
      this.setBusy(false)
    }
  }

  private resetPanel(stage: Stage): void {
    const panel = this.panel(stage)
    const editor = panel.querySelector('textarea')!
    editor.value = ''
    editor.disabled = true
    panel.querySelector('.badge.overridden')!.classList.add('hidden')
    panel.querySelector('.badge.pending')!.classList.add('hidden')
    panel.querySelector('.recall')!.classList.add('hidden')
    panel.querySelector('.revert')!.classList.add('hidden')
    panel.querySelector('.panel-error')!.classList.add('hidden')
  }

  private setBusy(busy: boolean): void {
    this.busy = busy
    this.refreshComposer()
    for (const stage of STAGES) {
      const recall = this.panel(stage).querySelector<HTMLButtonElement>('.recall')!
      recall.disabled = busy
    }
    this.element<HTMLButtonElement>('#start').disabled = busy || !this.registryLoaded
  }

  private refreshComposer(): void {
    const input = this.element<HTMLInputElement>('#message')
    const send = this.element<HTMLButtonElement>('#send')
    send.disabled = this.busy || this.sessionId === null || input.value.trim() === ''
  }

  private appendBubble(kind: 'user' | 'system', text: string): HTMLElement {
    const transcript = this.element('#transcript')
    const bubble = document.createElement('div')
    bubble.className = `bubble ${kind}`
    const body = document.createElement('span')
    body.className = 'bubble-text'
    body.textContent = text
    bubble.appendChild(body)
    transcript.appendChild(bubble)
    transcript.scrollTop = transcript.scrollHeight
    return bubble
  }

  private async sendMessage(): Promise<void> {
    const input = this.element<HTMLInputElement>('#message')
    const text = input.value.trim()
    if (!text || this.busy || this.sessionId === null) return
    this.setBusy(true)
    try {
      this.appendBubble('user', text)
      const trace = await this.client.postTurn(this.sessionId, text)
      input.value = ''
      this.lastSystemBubble = this.appendBubble('system', trace.response ?? '(acts only)')
      this.showTrace(trace)
    } catch (error) {
      this.showBanner(
        error instanceof ServiceError ? error.message : 'The service is unreachable.',
      )
    } finally {
      this.setBusy(false)
    }
  }

  /** Render a trace into the four panels; the panels always mirror the most
   *  recent trace returned by the service. */
  private showTrace(trace: StageTrace): void {
    this.lastTrace = trace
    for (const stage of STAGES) {
      const panel = this.panel(stage)
      const editor = panel.querySelector('textarea')!
      editor.value = stageText(trace, stage)
      editor.disabled = false
      panel.querySelector('.badge.pending')!.classList.add('hidden')
      panel.querySelector('.recall')!.classList.add('hidden')
      panel.querySelector('.revert')!.classList.add('hidden')
      panel.querySelector('.panel-error')!.classList.add('hidden')
      panel
        .querySelector('.badge.overridden')!
        .classList.toggle('hidden', trace.overridden_stage !== stage)
    }
  }

  private markEdited(stage: Stage): void {
    if (this.lastTrace === null) return
    const panel = this.panel(stage)
    const editor = panel.querySelector('textarea')!
    const dirty = editor.value !== stageText(this.lastTrace, stage)
    panel.querySelector('.badge.pending')!.classList.toggle('hidden', !dirty)
    panel.querySelector('.recall')!.classList.toggle('hidden', !dirty)
    panel.querySelector('.revert')!.classList.toggle('hidden', !dirty)
    if (!dirty) panel.querySelector('.panel-error')!.classList.add('hidden')
  }

  private revert(stage: Stage): void {
    if (this.lastTrace === null) return
    const panel = this.panel(stage)
    panel.querySelector('textarea')!.value = stageText(this.lastTrace, stage)
    this.markEdited(stage)
  }

  private async recall(stage: Stage): Promise<void> {
    if (this.busy || this.sessionId === null || this.lastTrace === null) return
    const panel = this.panel(stage)
    const errorLine = panel.querySelector('.panel-error')!
    const parsed = parseEditorText(stage, panel.querySelector('textarea')!.value)
    if (!parsed.ok) {
      errorLine.textContent = parsed.error ?? 'invalid edit'
      errorLine.classList.remove('hidden')
      return
    }
    this.setBusy(true)
    try {
      const trace = await this.client.overrideStage(this.sessionId, stage, parsed.value)
      this.showTrace(trace)
      if (this.lastSystemBubble) {
        this.lastSystemBubble.querySelector('.bubble-text')!.textContent =
          trace.response ?? '(acts only)'
        this.lastSystemBubble.classList.add('overridden')
        if (!this.lastSystemBubble.querySelector('.badge')) {
          const badge = document.createElement('span')
          badge.className = 'badge overridden'
          badge.textContent = 'overridden'
          this.lastSystemBubble.appendChild(badge)
        }
      }
    } catch (error) {
      if (error instanceof ServiceError) {
        errorLine.textContent = error.fieldPath
          ? `${error.message} (${error.fieldPath})`
          : error.message
        errorLine.classList.remove('hidden')
      } else {
        this.showBanner('The service is unreachable.')
      }
    } finally {
      this.setBusy(false)
    }
  }
}

export function createApp(root: HTMLElement, client: ServiceClient): App {
  return new App(root, client)
}
